#pragma once

#include "mive/core.hpp"

#include <random>
#include <sstream>
#include <string>

namespace mive {

/// Seeded random source. The full state (engine plus the normal
/// distribution's cached deviate) round-trips through `save`/`load`.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
    double normal() { return normal_(engine_); }
    int integer(int lo, int hi_inclusive) {
        return std::uniform_int_distribution<int>(lo, hi_inclusive)(engine_);
    }
    std::uint64_t next() { return engine_(); }

    template <class S>
    void fill_normal(Matrix<S>& m, double stddev) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * normal());
    }
    template <class S>
    void fill_normal(Tensor4<S>& t) {
        for (auto& v : t.data) v = static_cast<S>(normal());
    }

    std::string save() const {
        std::ostringstream os;
        os << engine_ << ' ' << normal_ << ' ' << uniform_;
        return os.str();
    }
    void load(const std::string& state) {
        std::istringstream is(state);
        is >> engine_ >> normal_ >> uniform_;
        if (!is) throw DataError("corrupt rng state");
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mive
