#pragma once

// On-disk formats.
//
// Tensor blob: [u64 little-endian header length][JSON header][raw data].
// The header is {"dtype": "float32"|"float64", "tensors": [{"name", "shape",
// "offset"}], "metadata": {...}} with offsets in bytes from the start of the
// data section. Videos are directories of frame_%05d.png plus meta.json.

#include "mive/core.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

namespace mive {
using json = nlohmann::json;
}

namespace mive::io {

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class Dtype { float32, float64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::float32 ? "float32" : "float64"; }
inline std::size_t dtype_bytes(Dtype d) { return d == Dtype::float32 ? 4 : 8; }

struct TensorRecord {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> values;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

struct Blob {
    json metadata = json::object();
    Dtype dtype = Dtype::float32;
    std::vector<TensorRecord> tensors;

    const TensorRecord& find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw DataError("blob has no tensor '" + name + "'");
    }
    bool contains(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return true;
        return false;
    }

    template <class S>
    void add(const std::string& name, const Matrix<S>& m) {
        TensorRecord r{name, {m.rows(), m.cols()}, {}};
        r.values.assign(m.data(), m.data() + m.size());
        tensors.push_back(std::move(r));
    }
    template <class S>
    void load_into(const std::string& name, Matrix<S>& m) const {
        const auto& r = find(name);
        if (r.shape.size() != 2 || r.shape[0] != m.rows() || r.shape[1] != m.cols())
            throw ShapeError("blob tensor '" + name + "' has unexpected shape");
        for (std::size_t i = 0; i < r.values.size(); ++i) m.data()[i] = static_cast<S>(r.values[i]);
    }
};

inline void write_blob(const fs::path& path, const Blob& blob) {
    json header;
    header["dtype"] = dtype_name(blob.dtype);
    header["metadata"] = blob.metadata;
    header["tensors"] = json::array();
    std::size_t offset = 0;
    for (const auto& t : blob.tensors) {
        if (t.values.size() != t.numel()) throw ShapeError("tensor '" + t.name + "' shape/value count mismatch");
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.values.size() * dtype_bytes(blob.dtype);
    }
    const std::string text = header.dump();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : blob.tensors) {
        if (blob.dtype == Dtype::float32) {
            std::vector<float> buf(t.values.begin(), t.values.end());
            out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        } else {
            out.write(reinterpret_cast<const char*>(t.values.data()),
                      static_cast<std::streamsize>(t.values.size() * 8));
        }
    }
    if (!out) throw DataError("short write to " + path.string());
}

inline Blob read_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1ull << 30)) throw DataError("bad blob header in " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    json header = json::parse(text, nullptr, false);
    if (header.is_discarded() || !header.contains("tensors")) throw DataError("bad blob header JSON in " + path.string());
    Blob blob;
    blob.dtype = header.value("dtype", std::string("float32")) == "float64" ? Dtype::float64 : Dtype::float32;
    blob.metadata = header.value("metadata", json::object());
    const auto data_start = in.tellg();
    for (const auto& e : header["tensors"]) {
        TensorRecord r;
        r.name = e.at("name").get<std::string>();
        r.shape = e.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = e.at("offset").get<std::size_t>();
        const std::size_t n = r.numel();
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        if (blob.dtype == Dtype::float32) {
            std::vector<float> buf(n);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
            r.values.assign(buf.begin(), buf.end());
        } else {
            r.values.resize(n);
            in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(n * 8));
        }
        if (!in) throw DataError("truncated blob " + path.string());
        blob.tensors.push_back(std::move(r));
    }
    return blob;
}

/// Latent file: one tensor "latent" plus {shape, dtype, has_ref_prefix} in the header metadata.
template <class S>
void write_latent(const fs::path& path, const Tensor4<S>& z, bool has_ref_prefix) {
    Blob blob;
    blob.metadata = {{"shape", z.shape}, {"dtype", "float32"}, {"has_ref_prefix", has_ref_prefix}};
    TensorRecord r{"latent", {z.shape[0], z.shape[1], z.shape[2], z.shape[3]}, {}};
    r.values.assign(z.data.begin(), z.data.end());
    blob.tensors.push_back(std::move(r));
    write_blob(path, blob);
}

template <class S>
Tensor4<S> read_latent(const fs::path& path, bool* has_ref_prefix = nullptr) {
    Blob blob = read_blob(path);
    const auto& r = blob.find("latent");
    if (r.shape.size() != 4) throw ShapeError("latent must be rank 4");
    Tensor4<S> z(static_cast<int>(r.shape[0]), static_cast<int>(r.shape[1]), static_cast<int>(r.shape[2]),
                 static_cast<int>(r.shape[3]));
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = static_cast<S>(r.values[i]);
    if (has_ref_prefix) *has_ref_prefix = blob.metadata.value("has_ref_prefix", false);
    return z;
}

// ---------------------------------------------------------------------------
// PNG

struct Image8 {
    int width = 0, height = 0, channels = 0;  // channels: 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;
};

inline Image8 read_png(const fs::path& path, int channels) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw DataError("cannot read PNG " + path.string() + ": " + img.message);
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 out{static_cast<int>(img.width), static_cast<int>(img.height), channels, {}};
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw DataError("cannot decode PNG " + path.string());
    }
    return out;
}

inline void write_png(const fs::path& path, const Image8& im) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(im.width);
    img.height = static_cast<png_uint_32>(im.height);
    img.format = im.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, im.pixels.data(), 0, nullptr))
        throw DataError("cannot write PNG " + path.string() + ": " + img.message);
}

inline std::vector<std::uint8_t> encode_png(const Image8& im) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(im.width);
    img.height = static_cast<png_uint_32>(im.height);
    img.format = im.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, im.pixels.data(), 0, nullptr))
        throw DataError(std::string("PNG size query failed: ") + img.message);
    std::vector<std::uint8_t> buf(size);
    if (!png_image_write_to_memory(&img, buf.data(), &size, 0, im.pixels.data(), 0, nullptr))
        throw DataError(std::string("PNG encode failed: ") + img.message);
    buf.resize(size);
    return buf;
}

inline std::uint8_t to_byte(float v) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

/// Frame t of a (T, 3, H, W) video as an RGB image.
inline Image8 frame_image(const Video& v, int t) {
    Image8 im{v.dim(3), v.dim(2), 3, {}};
    im.pixels.resize(static_cast<std::size_t>(im.width) * im.height * 3);
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            for (int c = 0; c < 3; ++c)
                im.pixels[(static_cast<std::size_t>(y) * im.width + x) * 3 + c] = to_byte(v(t, c, y, x));
    return im;
}

inline void write_video(const fs::path& dir, const Video& v, double fps = 8.0) {
    fs::create_directories(dir);
    char name[32];
    for (int t = 0; t < v.dim(0); ++t) {
        std::snprintf(name, sizeof(name), "frame_%05d.png", t);
        write_png(dir / name, frame_image(v, t));
    }
    json meta{{"T", v.dim(0)}, {"H", v.dim(2)}, {"W", v.dim(3)}, {"fps", fps}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
}

inline Video read_video(const fs::path& dir) {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw DataError("missing meta.json in " + dir.string());
    json meta = json::parse(meta_in, nullptr, false);
    if (meta.is_discarded()) throw DataError("bad meta.json in " + dir.string());
    const int t_count = meta.at("T").get<int>(), h = meta.at("H").get<int>(), w = meta.at("W").get<int>();
    Video v(t_count, 3, h, w);
    char name[32];
    for (int t = 0; t < t_count; ++t) {
        std::snprintf(name, sizeof(name), "frame_%05d.png", t);
        Image8 im = read_png(dir / name, 3);
        if (im.width != w || im.height != h) throw ShapeError("frame size disagrees with meta.json in " + dir.string());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    v(t, c, y, x) = im.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
    }
    return v;
}

inline void write_image(const fs::path& path, const Video& single_frame) { write_png(path, frame_image(single_frame, 0)); }

inline Video read_image(const fs::path& path) {
    Image8 im = read_png(path, 3);
    Video v(1, 3, im.height, im.width);
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            for (int c = 0; c < 3; ++c)
                v(0, c, y, x) = im.pixels[(static_cast<std::size_t>(y) * im.width + x) * 3 + c] / 255.0f;
    return v;
}

inline void write_mask(const fs::path& dir, const Mask3& m) {
    fs::create_directories(dir);
    char name[32];
    for (int t = 0; t < m.frames; ++t) {
        Image8 im{m.width, m.height, 1, {}};
        im.pixels.resize(static_cast<std::size_t>(m.width) * m.height);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                im.pixels[static_cast<std::size_t>(y) * m.width + x] = m(t, y, x) ? 255 : 0;
        std::snprintf(name, sizeof(name), "frame_%05d.png", t);
        write_png(dir / name, im);
    }
}

inline Mask3 read_mask(const fs::path& dir) {
    std::vector<Image8> frames;
    char name[32];
    for (int t = 0;; ++t) {
        std::snprintf(name, sizeof(name), "frame_%05d.png", t);
        if (!fs::exists(dir / name)) break;
        frames.push_back(read_png(dir / name, 1));
    }
    if (frames.empty()) throw DataError("no mask frames in " + dir.string());
    Mask3 m(static_cast<int>(frames.size()), frames[0].height, frames[0].width);
    for (int t = 0; t < m.frames; ++t)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                m.set(t, y, x, frames[t].pixels[static_cast<std::size_t>(y) * m.width + x] >= 128);
    return m;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t v = bytes[i] << 16;
        if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? table[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("invalid JSON in " + path.string());
    return j;
}

inline void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace mive::io
