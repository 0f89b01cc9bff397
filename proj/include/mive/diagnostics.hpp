#pragma once

// Cross-modal attention diagnostics: the text -> visual block of a layer's
// head-averaged softmax attention, the attention mask ratio, and heatmaps.

#include "mive/autograd.hpp"
#include "mive/io.hpp"
#include "mive/toy_encoder.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace mive::diagnostics {

template <class S>
struct CrossModalAttention {
    Matrix<S> values;  // N x M
    int layer = 0;
};

struct TokenGrid {
    int frames = 0, height = 0, width = 0;
    int size() const { return frames * height * width; }
};

struct TokenMask {
    std::vector<int> members;  // visual token indices, ascending
    TokenGrid grid;
};

template <class S>
struct Heatmap {
    TokenGrid grid;
    std::vector<S> values;  // frames x height x width
    S at(int t, int y, int x) const { return values[(static_cast<std::size_t>(t) * grid.height + y) * grid.width + x]; }
};

namespace detail {
template <class S>
void check_layer(const EncoderTrace<S>& trace, int layer) {
    if (layer < 1 || layer > trace.layers())
        throw UsageError("layer " + std::to_string(layer) + " outside [1, " + std::to_string(trace.layers()) + "]");
}
}  // namespace detail

/// Head-averaged softmax(Q K^T / sqrt(d_k)) restricted to the given query rows.
template <class S>
Matrix<S> averaged_attention_rows(const EncoderTrace<S>& trace, int layer, const std::vector<int>& rows) {
    detail::check_layer(trace, layer);
    const auto& qs = trace.queries[static_cast<std::size_t>(layer - 1)];
    const auto& ks = trace.keys[static_cast<std::size_t>(layer - 1)];
    const auto heads = static_cast<S>(qs.size());
    const Eigen::Index seq = ks.front().rows();
    Matrix<S> avg = Matrix<S>::Zero(static_cast<Eigen::Index>(rows.size()), seq);
    for (std::size_t h = 0; h < qs.size(); ++h) {
        const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(qs[h].cols()));
        Matrix<S> q(static_cast<Eigen::Index>(rows.size()), qs[h].cols());
        for (std::size_t i = 0; i < rows.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = qs[h].row(rows[i]);
        avg += ops::softmax_rows<S>(Matrix<S>(q * ks[h].transpose() * inv_sqrt));
    }
    return avg / heads;
}

template <class S>
CrossModalAttention<S> cross_modal_attention(const EncoderTrace<S>& trace, const UnifiedContext<S>& ctx, int layer) {
    Matrix<S> rows = averaged_attention_rows(trace, layer, ctx.text_indices());
    if (rows.cols() != ctx.sequence_length()) throw ShapeError("trace does not match context length");
    return {Matrix<S>(rows.middleCols(ctx.text_count, ctx.visual_count)), layer};
}

template <class S>
S attention_mask_ratio(const CrossModalAttention<S>& a, const TokenMask& mask) {
    const auto m = a.values.cols();
    for (int j : mask.members)
        if (j < 0 || j >= m) throw ShapeError("mask index " + std::to_string(j) + " outside [0, " + std::to_string(m) + ")");
    std::vector<char> member(static_cast<std::size_t>(m), 0);
    for (int j : mask.members) member[static_cast<std::size_t>(j)] = 1;
    // inside / (inside + outside) stays within [0, 1] under rounding, unlike inside / sum().
    S inside = S(0), outside = S(0);
    for (Eigen::Index j = 0; j < m; ++j) (member[static_cast<std::size_t>(j)] ? inside : outside) += a.values.col(j).sum();
    const S total = inside + outside;
    if (!(total > S(0))) throw DataError("degenerate input: attention block sums to zero");
    return inside / total;
}

/// Column means over the text rows, laid out on the visual token grid.
template <class S>
Heatmap<S> mean_text_heatmap(const CrossModalAttention<S>& a, const TokenGrid& grid) {
    if (grid.size() != a.values.cols())
        throw ShapeError("grid " + std::to_string(grid.size()) + " != visual tokens " + std::to_string(a.values.cols()));
    if (a.values.rows() == 0) throw DataError("degenerate input: no text tokens to average");
    Heatmap<S> out{grid, {}};
    out.values.resize(static_cast<std::size_t>(grid.size()));
    const S n = static_cast<S>(a.values.rows());
    for (Eigen::Index j = 0; j < a.values.cols(); ++j) out.values[static_cast<std::size_t>(j)] = a.values.col(j).sum() / n;
    return out;
}

/// A token belongs to the mask iff strictly more than half of its p x p pixel footprint is set.
inline TokenMask downsample_mask(const Mask3& pixels, int patch) {
    if (patch <= 0 || pixels.height % patch || pixels.width % patch)
        throw ShapeError("mask dims " + std::to_string(pixels.height) + "x" + std::to_string(pixels.width) +
                         " not divisible by patch " + std::to_string(patch));
    TokenMask out;
    out.grid = {pixels.frames, pixels.height / patch, pixels.width / patch};
    const int half = patch * patch;
    int idx = 0;
    for (int t = 0; t < pixels.frames; ++t)
        for (int by = 0; by < out.grid.height; ++by)
            for (int bx = 0; bx < out.grid.width; ++bx, ++idx) {
                int covered = 0;
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx) covered += pixels(t, by * patch + dy, bx * patch + dx) ? 1 : 0;
                if (2 * covered > half) out.members.push_back(idx);
            }
    return out;
}

/// Layer index for a relative depth d = l / L; d = 0 maps to the first layer.
inline int layer_for_depth(double depth, int layers) {
    const long l = std::lround(depth * layers);
    return static_cast<int>(std::max(1L, std::min<long>(layers, l)));
}

/// One 8-bit PNG per grid frame (min-max normalized over the whole map) plus
/// a raw float sidecar holding the unnormalized values.
template <class S>
void write_heatmap(const std::filesystem::path& dir, const std::string& stem, const Heatmap<S>& map, int upscale = 8) {
    std::filesystem::create_directories(dir);
    S lo = map.values.empty() ? S(0) : map.values.front(), hi = lo;
    for (S v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const S range = hi - lo;
    for (int t = 0; t < map.grid.frames; ++t) {
        io::Image8 im{map.grid.width * upscale, map.grid.height * upscale, 1, {}};
        im.pixels.resize(static_cast<std::size_t>(im.width) * im.height);
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) {
                const S v = map.at(t, y / upscale, x / upscale);
                const double n = range > S(0) ? static_cast<double>((v - lo) / range) : 0.0;
                im.pixels[static_cast<std::size_t>(y) * im.width + x] = io::to_byte(static_cast<float>(n));
            }
        char name[64];
        std::snprintf(name, sizeof(name), "_frame_%05d.png", t);
        io::write_png(dir / (stem + name), im);
    }
    io::Blob blob;
    blob.dtype = io::Dtype::float32;
    io::TensorRecord r{"heatmap", {map.grid.frames, map.grid.height, map.grid.width}, {}};
    r.values.assign(map.values.begin(), map.values.end());
    blob.tensors.push_back(std::move(r));
    blob.metadata = {{"min", static_cast<double>(lo)}, {"max", static_cast<double>(hi)}};
    io::write_blob(dir / (stem + ".bin"), blob);
}

}  // namespace mive::diagnostics
