#pragma once

// Six-dimension edit scoring with a programmatic oracle judge, the
// negligible-difference cap and the reference-persistence rule.
//
// Oracle formulas, all of the form 10 * (1 - min(1, err / tau)) with tau = 0.25:
//   IA  MAE(output, target) over masked pixels
//   CC  MAE(output, source) over unmasked pixels
//   TS  mean |d/dt output - d/dt target|
//   PR  mean | |grad output| - |grad target| |      (edge coherence proxy)
//   VA  mean |luma range(output) - luma range(target)| per frame (dynamic range proxy)
//   SC  mean over frames/channels of |mean diff| + |std diff| (color statistics proxy)

#include "mive/core.hpp"
#include "mive/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace mive::eval {

enum Dim { IA = 0, CC, TS, PR, VA, SC };
inline constexpr int dim_count = 6;
inline const std::array<const char*, dim_count> dim_names{"IA", "CC", "TS", "PR", "VA", "SC"};

struct EvalScores {
    std::array<double, dim_count> value{};
    std::array<std::string, dim_count> reasoning;

    double& operator[](Dim d) { return value[d]; }
    double operator[](Dim d) const { return value[d]; }
    double mean() const {
        double s = 0;
        for (double v : value) s += v;
        return s / dim_count;
    }
    bool operator==(const EvalScores& o) const { return value == o.value && reasoning == o.reasoning; }
};

inline json to_json(const EvalScores& s) {
    json j = json::object();
    for (int d = 0; d < dim_count; ++d)
        j[dim_names[d]] = {{std::string(dim_names[d]) + "_score", s.value[d]}, {"reasoning", s.reasoning[d]}};
    return j;
}

inline void validate(const EvalScores& s) {
    for (int d = 0; d < dim_count; ++d)
        if (!(s.value[d] >= 0.0 && s.value[d] <= 10.0))
            throw DataError(std::string("score ") + dim_names[d] + " = " + std::to_string(s.value[d]) + " outside [0, 10]");
}

inline constexpr double oracle_tau = 0.25;
inline constexpr double negligible_delta = 1e-3;
inline constexpr double negligible_cap = 6.0;

inline double score_from_error(double err, double tau = oracle_tau) {
    return std::clamp(10.0 * (1.0 - std::min(1.0, err / tau)), 0.0, 10.0);
}

inline double luma(const Video& v, int t, int y, int x) {
    return 0.299 * v(t, 0, y, x) + 0.587 * v(t, 1, y, x) + 0.114 * v(t, 2, y, x);
}

namespace detail {

/// Mean |a - b| over pixels selected by `want(mask bit)`; NaN when none.
inline double masked_mae(const Video& a, const Video& b, const Mask3& m, bool inside) {
    double sum = 0;
    std::size_t n = 0;
    for (int t = 0; t < a.dim(0); ++t)
        for (int y = 0; y < a.dim(2); ++y)
            for (int x = 0; x < a.dim(3); ++x) {
                if (m(t, y, x) != inside) continue;
                for (int c = 0; c < a.dim(1); ++c) sum += std::abs(static_cast<double>(a(t, c, y, x)) - b(t, c, y, x));
                n += static_cast<std::size_t>(a.dim(1));
            }
    return n ? sum / static_cast<double>(n) : std::nan("");
}

inline double mae(const Video& a, const Video& b) {
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return a.size() ? sum / static_cast<double>(a.size()) : 0.0;
}

inline double temporal_error(const Video& out, const Video& tgt) {
    if (out.dim(0) < 2) return 0.0;
    double sum = 0;
    std::size_t n = 0;
    const std::size_t fs = out.frame_size();
    for (int t = 1; t < out.dim(0); ++t)
        for (std::size_t i = 0; i < fs; ++i) {
            const std::size_t a = t * fs + i, b = (t - 1) * fs + i;
            sum += std::abs((static_cast<double>(out.data[a]) - out.data[b]) - (static_cast<double>(tgt.data[a]) - tgt.data[b]));
            ++n;
        }
    return sum / static_cast<double>(n);
}

inline double gradient_magnitude(const Video& v, int t, int y, int x) {
    const int h = v.dim(2), w = v.dim(3);
    const double gx = luma(v, t, y, std::min(x + 1, w - 1)) - luma(v, t, y, x);
    const double gy = luma(v, t, std::min(y + 1, h - 1), x) - luma(v, t, y, x);
    return std::sqrt(gx * gx + gy * gy);
}

inline double edge_error(const Video& out, const Video& tgt) {
    double sum = 0;
    for (int t = 0; t < out.dim(0); ++t)
        for (int y = 0; y < out.dim(2); ++y)
            for (int x = 0; x < out.dim(3); ++x)
                sum += std::abs(gradient_magnitude(out, t, y, x) - gradient_magnitude(tgt, t, y, x));
    return sum / static_cast<double>(out.dim(0) * out.dim(2) * out.dim(3));
}

inline double range_error(const Video& out, const Video& tgt) {
    double sum = 0;
    for (int t = 0; t < out.dim(0); ++t) {
        double lo_o = 1e9, hi_o = -1e9, lo_t = 1e9, hi_t = -1e9;
        for (int y = 0; y < out.dim(2); ++y)
            for (int x = 0; x < out.dim(3); ++x) {
                const double a = luma(out, t, y, x), b = luma(tgt, t, y, x);
                lo_o = std::min(lo_o, a), hi_o = std::max(hi_o, a);
                lo_t = std::min(lo_t, b), hi_t = std::max(hi_t, b);
            }
        sum += std::abs((hi_o - lo_o) - (hi_t - lo_t));
    }
    return sum / out.dim(0);
}

inline double color_stats_error(const Video& out, const Video& tgt) {
    double sum = 0;
    const double n = static_cast<double>(out.plane_size());
    for (int t = 0; t < out.dim(0); ++t)
        for (int c = 0; c < 3; ++c) {
            double mo = 0, mt = 0, so = 0, st = 0;
            for (int y = 0; y < out.dim(2); ++y)
                for (int x = 0; x < out.dim(3); ++x) mo += out(t, c, y, x), mt += tgt(t, c, y, x);
            mo /= n, mt /= n;
            for (int y = 0; y < out.dim(2); ++y)
                for (int x = 0; x < out.dim(3); ++x) {
                    so += (out(t, c, y, x) - mo) * (out(t, c, y, x) - mo);
                    st += (tgt(t, c, y, x) - mt) * (tgt(t, c, y, x) - mt);
                }
            sum += std::abs(mo - mt) + std::abs(std::sqrt(so / n) - std::sqrt(st / n));
        }
    return sum / (3.0 * out.dim(0));
}

inline std::string describe(double err) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "error %.5f (tau %.2f)", err, oracle_tau);
    return buf;
}

}  // namespace detail

inline EvalScores oracle_scores(const datagen::EditSample& s, const Video& out) {
    if (!out.same_shape(s.tgt) || !out.same_shape(s.src))
        throw ShapeError("output " + shape_string(out.shape) + " does not match sample " + shape_string(s.tgt.shape));
    if (s.mask.frames != out.dim(0) || s.mask.height != out.dim(2) || s.mask.width != out.dim(3))
        throw ShapeError("mask shape does not match output");
    EvalScores r;
    std::array<double, dim_count> err{};
    const double in = detail::masked_mae(out, s.tgt, s.mask, true);
    const double outside = detail::masked_mae(out, s.src, s.mask, false);
    err[IA] = std::isnan(in) ? detail::mae(out, s.tgt) : in;
    err[CC] = std::isnan(outside) ? 0.0 : outside;
    err[TS] = detail::temporal_error(out, s.tgt);
    err[PR] = detail::edge_error(out, s.tgt);
    err[VA] = detail::range_error(out, s.tgt);
    err[SC] = detail::color_stats_error(out, s.tgt);
    for (int d = 0; d < dim_count; ++d) {
        r.value[d] = score_from_error(err[d]);
        r.reasoning[d] = detail::describe(err[d]);
    }
    return r;
}

inline EvalScores apply_negligible_cap(EvalScores s, const Video& src, const Video& out) {
    if (!src.same_shape(out)) throw ShapeError("cap rule: source/output shape mismatch");
    if (detail::mae(src, out) < negligible_delta)
        for (int d = 0; d < dim_count; ++d)
            if (s.value[d] > negligible_cap) {
                s.value[d] = negligible_cap;
                s.reasoning[d] += " [capped: output indistinguishable from source]";
            }
    return s;
}

enum class Persistence { penalize, no_penalty };

inline const char* to_string(Persistence p) { return p == Persistence::penalize ? "penalize" : "no_penalty"; }

/// Whether the element occupying `region` at frame t is visible in v: at
/// least half of the region's pixels stay within 0.1 (every channel) of the
/// element's color, taken as the region's mean color in the first frame
/// where the region is non-empty.
inline std::vector<bool> element_visible(const Video& v, const Mask3& region, double tol = 0.1) {
    std::vector<bool> vis(static_cast<std::size_t>(v.dim(0)), false);
    int first = -1;
    for (int t = 0; t < region.frames && first < 0; ++t)
        if (region.count_frame(t) > 0) first = t;
    if (first < 0) return vis;
    std::array<double, 3> anchor{};
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x)
            if (region(first, y, x))
                for (int c = 0; c < 3; ++c) anchor[c] += v(first, c, y, x);
    const double n0 = static_cast<double>(region.count_frame(first));
    for (auto& a : anchor) a /= n0;
    for (int t = 0; t < v.dim(0); ++t) {
        const std::size_t n = region.count_frame(t);
        if (!n) continue;
        std::size_t hit = 0;
        for (int y = 0; y < region.height; ++y)
            for (int x = 0; x < region.width; ++x) {
                if (!region(t, y, x)) continue;
                bool close = true;
                for (int c = 0; c < 3; ++c) close = close && std::abs(v(t, c, y, x) - anchor[c]) <= tol;
                hit += close ? 1 : 0;
            }
        vis[static_cast<std::size_t>(t)] = 2 * hit >= n;
    }
    return vis;
}

/// Penalize only when the element is visible in the source at some frame
/// where it has vanished from the output.
inline Persistence reference_persistence_check(const datagen::EditSample& s, const Video& out, const Mask3& region) {
    if (!out.same_shape(s.src)) throw ShapeError("persistence check: output shape mismatch");
    if (region.frames != out.dim(0) || region.height != out.dim(2) || region.width != out.dim(3))
        throw ShapeError("persistence check: region shape mismatch");
    if (region.count() == 0) return Persistence::no_penalty;
    const auto in_src = element_visible(s.src, region);
    const auto in_out = element_visible(out, region);
    for (std::size_t t = 0; t < in_src.size(); ++t)
        if (in_src[t] && !in_out[t]) return Persistence::penalize;
    return Persistence::no_penalty;
}

}  // namespace mive::eval
