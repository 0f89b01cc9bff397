#pragma once

// Synthetic paired editing data: a moving colored shape over a drifting
// textured background, rendered with hard edges and 8-bit quantized colors so
// every sample survives a PNG round trip bit-exactly and the ground-truth
// mask is exactly the set of pixels where source and target differ.
//
// Palette design: each foreground color has a channel >= 0.8, background A
// lives in [0.10, 0.45] per channel and background B in [0.50, 0.75], so a
// foreground pixel always differs from either background and the two
// backgrounds differ everywhere.

#include "mive/core.hpp"
#include "mive/io.hpp"
#include "mive/rng.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace mive::datagen {

enum class EditType { del, add, background_swap, recolor };

inline const char* to_string(EditType e) {
    switch (e) {
        case EditType::del: return "delete";
        case EditType::add: return "add";
        case EditType::background_swap: return "background_swap";
        case EditType::recolor: return "recolor";
    }
    return "?";
}

inline EditType parse_edit_type(const std::string& s) {
    if (s == "delete") return EditType::del;
    if (s == "add") return EditType::add;
    if (s == "background_swap") return EditType::background_swap;
    if (s == "recolor") return EditType::recolor;
    throw UsageError("unknown edit type '" + s + "'");
}

inline const std::vector<EditType>& all_edit_types() {
    static const std::vector<EditType> v{EditType::del, EditType::add, EditType::background_swap, EditType::recolor};
    return v;
}

struct NamedColor {
    const char* name;
    std::array<int, 3> rgb;  // 0..255
};

inline const std::array<NamedColor, 8>& palette() {
    static const std::array<NamedColor, 8> p{{{"red", {230, 30, 30}},
                                              {"green", {30, 210, 40}},
                                              {"blue", {30, 60, 235}},
                                              {"yellow", {235, 225, 30}},
                                              {"cyan", {30, 220, 225}},
                                              {"magenta", {225, 35, 215}},
                                              {"orange", {245, 140, 20}},
                                              {"white", {245, 245, 245}}}};
    return p;
}

enum class Shape { circle, square };
inline const char* to_string(Shape s) { return s == Shape::circle ? "circle" : "square"; }

struct GenConfig {
    int frames = 9;
    int height = 32;
    int width = 32;
};

/// Texture parameters of one procedurally drifting background.
struct Background {
    std::array<double, 3> base{};
    double amplitude = 0;
    double fx = 0, fy = 0, phase = 0, drift = 0;
    double lo = 0, hi = 1;

    float value(int c, int t, int y, int x) const {
        const double wave = std::sin(2 * std::numbers::pi * (fx * x + fy * y) + phase + drift * t);
        const double tint = 0.5 * std::sin(phase + 2.0 * c);
        double v = base[static_cast<std::size_t>(c)] + amplitude * (wave + tint);
        v = std::min(hi, std::max(lo, v));
        return static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
};

/// Shape trajectory: linear drift plus a sinusoidal vertical wobble.
struct Track {
    Shape shape = Shape::circle;
    double radius = 5;
    double x0 = 16, y0 = 16, vx = 0, vy = 0, wobble = 0, omega = 0, phase = 0;

    double cx(int t) const { return x0 + vx * t; }
    double cy(int t) const { return y0 + vy * t + wobble * std::sin(omega * t + phase); }

    bool covers(int t, int y, int x) const {
        const double dx = x + 0.5 - cx(t), dy = y + 0.5 - cy(t);
        if (shape == Shape::circle) return dx * dx + dy * dy <= radius * radius;
        return std::abs(dx) <= radius && std::abs(dy) <= radius;
    }
};

struct EditSample {
    std::string id;
    EditType type = EditType::del;
    std::uint64_t seed = 0;
    Video src, tgt, ref;
    Mask3 mask;
    std::string instruction;
    json meta;  // shape/color/background descriptors
};

namespace detail {

inline float channel(const NamedColor& c, int ch) {
    return static_cast<float>(c.rgb[static_cast<std::size_t>(ch)]) / 255.0f;
}

inline Background random_background(Rng& rng, double lo, double hi) {
    Background b;
    b.lo = lo;
    b.hi = hi;
    const double mid = 0.5 * (lo + hi), span = hi - lo;
    for (auto& v : b.base) v = mid + rng.uniform(-0.15, 0.15) * span;
    b.amplitude = rng.uniform(0.08, 0.2) * span;
    b.fx = rng.uniform(0.02, 0.08);
    b.fy = rng.uniform(0.02, 0.08);
    b.phase = rng.uniform(0, 2 * std::numbers::pi);
    b.drift = rng.uniform(-0.6, 0.6);
    return b;
}

inline Track random_track(Rng& rng, const GenConfig& g) {
    Track tr;
    tr.shape = rng.integer(0, 1) == 0 ? Shape::circle : Shape::square;
    tr.radius = rng.uniform(4.0, 7.0);
    // Frame 0 always shows the shape; faster tracks leave the frame later on.
    tr.x0 = rng.uniform(tr.radius + 1, g.width - tr.radius - 1);
    tr.y0 = rng.uniform(tr.radius + 1, g.height - tr.radius - 1);
    const double speed = rng.uniform(0.5, 3.5);
    const double angle = rng.uniform(0, 2 * std::numbers::pi);
    tr.vx = speed * std::cos(angle);
    tr.vy = 0.5 * speed * std::sin(angle);
    tr.wobble = rng.uniform(0.0, 3.0);
    tr.omega = rng.uniform(0.4, 1.2);
    tr.phase = rng.uniform(0, 2 * std::numbers::pi);
    return tr;
}

inline Video render(const GenConfig& g, const Background& bg, const Track* track, const NamedColor* color) {
    Video v(g.frames, 3, g.height, g.width);
    for (int t = 0; t < g.frames; ++t)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                const bool fg = track && track->covers(t, y, x);
                for (int c = 0; c < 3; ++c) v(t, c, y, x) = fg ? channel(*color, c) : bg.value(c, t, y, x);
            }
    return v;
}

inline const char* background_name(const Background& b) {
    const auto& v = b.base;
    if (v[0] >= v[1] && v[0] >= v[2]) return "warm";
    if (v[1] >= v[2]) return "green";
    return "blue";
}

}  // namespace detail

/// Pixels where any channel of a and b differs.
inline Mask3 difference_mask(const Video& a, const Video& b) {
    if (!a.same_shape(b)) throw ShapeError("difference_mask shape mismatch");
    Mask3 m(a.dim(0), a.dim(2), a.dim(3));
    for (int t = 0; t < a.dim(0); ++t)
        for (int y = 0; y < a.dim(2); ++y)
            for (int x = 0; x < a.dim(3); ++x) {
                bool d = false;
                for (int c = 0; c < 3; ++c) d = d || a(t, c, y, x) != b(t, c, y, x);
                m.set(t, y, x, d);
            }
    return m;
}

/// Frame t of v as a single-frame video.
inline Video frame_of(const Video& v, int t) {
    Video out(1, v.dim(1), v.dim(2), v.dim(3));
    std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(v.offset(t, 0, 0, 0)),
              v.data.begin() + static_cast<std::ptrdiff_t>(v.offset(t, 0, 0, 0) + v.frame_size()), out.data.begin());
    return out;
}

inline EditSample generate_sample(EditType type, std::uint64_t seed, const GenConfig& g = {}) {
    if (g.frames < 1 || g.height < 8 || g.width < 8) throw UsageError("generator dims too small");
    Rng rng(seed);
    const Background bg_a = detail::random_background(rng, 0.10, 0.45);
    const Background bg_b = detail::random_background(rng, 0.50, 0.75);
    const Track track = detail::random_track(rng, g);
    const auto& pal = palette();
    const int ci = rng.integer(0, static_cast<int>(pal.size()) - 1);
    int cj = rng.integer(0, static_cast<int>(pal.size()) - 2);
    if (cj >= ci) ++cj;
    const NamedColor& color = pal[static_cast<std::size_t>(ci)];
    const NamedColor& new_color = pal[static_cast<std::size_t>(cj)];
    const std::string shape = to_string(track.shape);

    EditSample s;
    s.type = type;
    s.seed = seed;
    s.meta = {{"shape", shape},
              {"color", color.name},
              {"background", detail::background_name(bg_a)},
              {"radius", track.radius}};
    switch (type) {
        case EditType::del:
            s.src = detail::render(g, bg_a, &track, &color);
            s.tgt = detail::render(g, bg_a, nullptr, nullptr);
            s.instruction = std::string("remove the ") + color.name + " " + shape;
            break;
        case EditType::add:
            s.src = detail::render(g, bg_a, nullptr, nullptr);
            s.tgt = detail::render(g, bg_a, &track, &color);
            s.instruction = std::string("add a ") + color.name + " " + shape;
            break;
        case EditType::background_swap:
            s.src = detail::render(g, bg_a, &track, &color);
            s.tgt = detail::render(g, bg_b, &track, &color);
            s.instruction = std::string("replace the background behind the ") + color.name + " " + shape +
                            " with a bright " + detail::background_name(bg_b) + " background";
            s.meta["new_background"] = detail::background_name(bg_b);
            break;
        case EditType::recolor:
            s.src = detail::render(g, bg_a, &track, &color);
            s.tgt = detail::render(g, bg_a, &track, &new_color);
            s.instruction = std::string("recolor the ") + color.name + " " + shape + " to " + new_color.name;
            s.meta["new_color"] = new_color.name;
            break;
    }
    s.ref = frame_of(s.tgt, 0);
    s.mask = difference_mask(s.src, s.tgt);
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%06llu", to_string(type), static_cast<unsigned long long>(seed));
    s.id = id;
    return s;
}

// ---------------------------------------------------------------------------
// Filtering and category caps.

enum class Verdict { retain, reject_minor, reject_hard };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::retain: return "retain";
        case Verdict::reject_minor: return "reject_minor";
        case Verdict::reject_hard: return "reject_hard";
    }
    return "?";
}

struct FilterDecision {
    double score = 0;
    Verdict verdict = Verdict::reject_hard;
    std::string reason;
};

inline FilterDecision filter_decision(double score) {
    if (!(score >= 0.0 && score <= 10.0)) throw DataError("filter score " + std::to_string(score) + " outside [0, 10]");
    if (score < 5.0) return {score, Verdict::reject_hard, "hard rejection: score below 5.0"};
    if (score < 8.5) return {score, Verdict::reject_minor, "below quality threshold 8.5"};
    return {score, Verdict::retain, "meets retention threshold 8.5"};
}

/// Keeps at most `cap` items per edit type, preserving input order.
template <class T, class KeyFn>
std::vector<T> cap_per_category(const std::vector<T>& items, int cap, KeyFn key) {
    if (cap < 0) throw UsageError("cap must be non-negative");
    std::map<EditType, int> seen;
    std::vector<T> out;
    for (const auto& it : items)
        if (seen[key(it)]++ < cap) out.push_back(it);
    return out;
}

inline std::vector<EditSample> cap_per_category(const std::vector<EditSample>& samples, int cap) {
    return cap_per_category(samples, cap, [](const EditSample& s) { return s.type; });
}

// ---------------------------------------------------------------------------
// On-disk layout: <root>/<id>/{src/, tgt/, ref.png, mask/, sample.json}

inline void write_sample(const std::filesystem::path& root, const EditSample& s) {
    const auto dir = root / s.id;
    io::write_video(dir / "src", s.src);
    io::write_video(dir / "tgt", s.tgt);
    io::write_image(dir / "ref.png", s.ref);
    io::write_mask(dir / "mask", s.mask);
    json j{{"id", s.id},
           {"edit_type", to_string(s.type)},
           {"seed", s.seed},
           {"instruction", s.instruction},
           {"frames", s.src.dim(0)},
           {"height", s.src.dim(2)},
           {"width", s.src.dim(3)},
           {"meta", s.meta}};
    io::write_json(dir / "sample.json", j);
}

inline EditSample read_sample(const std::filesystem::path& dir) {
    const json j = io::read_json(dir / "sample.json");
    EditSample s;
    try {
        s.id = j.at("id").get<std::string>();
        s.type = parse_edit_type(j.at("edit_type").get<std::string>());
        s.seed = j.at("seed").get<std::uint64_t>();
        s.instruction = j.at("instruction").get<std::string>();
        s.meta = j.value("meta", json::object());
    } catch (const json::exception& e) {
        throw DataError("malformed sample.json in " + dir.string() + ": " + e.what());
    }
    s.src = io::read_video(dir / "src");
    s.tgt = io::read_video(dir / "tgt");
    s.ref = io::read_image(dir / "ref.png");
    s.mask = io::read_mask(dir / "mask");
    if (!s.src.same_shape(s.tgt)) throw DataError("source/target shape mismatch in " + dir.string());
    return s;
}

/// All sample directories under root, sorted by name.
inline std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw DataError("dataset directory " + root.string() + " not found");
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(root))
        if (e.is_directory() && std::filesystem::exists(e.path() / "sample.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mive::datagen
