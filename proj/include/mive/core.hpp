#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mive {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Process exit codes double as error categories.
enum class ErrorKind : int { usage = 2, data = 3, numeric = 4, network = 5 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::data, "shape: " + what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, "numeric: " + what) {}
};

struct NetworkError : Error {
    NetworkError(const std::string& what, int attempts)
        : Error(ErrorKind::network, what + " (attempts=" + std::to_string(attempts) + ")"), attempts(attempts) {}
    int attempts;
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Dense rank-4 tensor in row-major (d0, d1, d2, d3) order.
///
/// Videos are (T, 3, H, W) with values in [0, 1]; latents are (T', C, H', W').
template <class S>
struct Tensor4 {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<S> data;

    Tensor4() = default;
    Tensor4(int d0, int d1, int d2, int d3, S fill = S(0))
        : shape{d0, d1, d2, d3}, data(static_cast<std::size_t>(d0) * d1 * d2 * d3, fill) {}

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data.size(); }
    std::size_t frame_size() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }
    std::size_t plane_size() const { return static_cast<std::size_t>(shape[2]) * shape[3]; }

    std::size_t offset(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d;
    }
    S& operator()(int a, int b, int c, int d) { return data[offset(a, b, c, d)]; }
    S operator()(int a, int b, int c, int d) const { return data[offset(a, b, c, d)]; }

    bool same_shape(const Tensor4& o) const { return shape == o.shape; }
    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <class U>
    Tensor4<U> cast() const {
        Tensor4<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    bool operator==(const Tensor4& o) const { return shape == o.shape && data == o.data; }
};

using Video = Tensor4<float>;

inline std::string shape_string(const std::array<int, 4>& s) {
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]) + "x" +
           std::to_string(s[3]);
}

/// Binary (T, H, W) mask.
struct Mask3 {
    int frames = 0, height = 0, width = 0;
    std::vector<std::uint8_t> bits;

    Mask3() = default;
    Mask3(int t, int h, int w, bool fill = false)
        : frames(t), height(h), width(w), bits(static_cast<std::size_t>(t) * h * w, fill ? 1 : 0) {}

    std::size_t offset(int t, int y, int x) const {
        return (static_cast<std::size_t>(t) * height + y) * width + x;
    }
    bool operator()(int t, int y, int x) const { return bits[offset(t, y, x)] != 0; }
    void set(int t, int y, int x, bool v) { bits[offset(t, y, x)] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += b ? 1 : 0;
        return n;
    }
    std::size_t count_frame(int t) const {
        std::size_t n = 0;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) n += (*this)(t, y, x) ? 1 : 0;
        return n;
    }
    bool operator==(const Mask3& o) const {
        return frames == o.frames && height == o.height && width == o.width && bits == o.bits;
    }
};

template <class S>
bool all_finite(const Matrix<S>& m) {
    return m.allFinite();
}

}  // namespace mive
