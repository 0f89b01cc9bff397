#pragma once

// Deterministic, exactly invertible video codec with the causal-VAE latent
// geometry T' = floor(T/4) + 1, H' = H/8, W' = W/8. Frame 0 is replicated
// into a 4-frame group; every later group of 4 frames is space-to-depth'd by
// 8 and channel-stacked, giving C = 3 * 64 * 4 = 768.

#include "mive/core.hpp"

#include <string>

namespace mive::codec {

inline constexpr int temporal_factor = 4;
inline constexpr int spatial_factor = 8;
inline constexpr int latent_channels = 3 * spatial_factor * spatial_factor * temporal_factor;

template <class S>
struct LatentTensor {
    Tensor4<S> data;  // T_lat x C x H' x W'
    bool has_ref_prefix = false;

    int frames() const { return data.dim(0); }
    int channels() const { return data.dim(1); }
};

/// Joint latent: channels [0, C) are the noisy-target branch
/// [z_ref; z_t], channels [C, 2C) the control branch [z_ref; z_src].
template <class S>
struct JointLatent {
    Tensor4<S> data;  // (T'+1) x 2C x H' x W'
    int branch_channels = 0;
};

inline int latent_frames(int frames) { return frames / temporal_factor + 1; }

inline void check_video_shape(int t, int h, int w) {
    if (t < 1 || (t - 1) % temporal_factor != 0)
        throw ShapeError("frame count " + std::to_string(t) + " must satisfy T = 1 (mod 4)");
    if (h <= 0 || w <= 0 || h % spatial_factor || w % spatial_factor)
        throw ShapeError("spatial dims " + std::to_string(h) + "x" + std::to_string(w) + " must be multiples of 8");
}

/// Source frame feeding replica `r` of latent frame `g`.
inline int source_frame(int g, int r) { return g == 0 ? 0 : temporal_factor * (g - 1) + 1 + r; }

template <class S>
LatentTensor<S> encode(const Video& video) {
    if (video.dim(1) != 3) throw ShapeError("video must have 3 channels");
    const int t = video.dim(0), h = video.dim(2), w = video.dim(3);
    check_video_shape(t, h, w);
    const int tl = latent_frames(t), hl = h / spatial_factor, wl = w / spatial_factor;
    LatentTensor<S> z{Tensor4<S>(tl, latent_channels, hl, wl), false};
    for (int g = 0; g < tl; ++g)
        for (int r = 0; r < temporal_factor; ++r) {
            const int f = source_frame(g, r);
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < spatial_factor; ++dy)
                    for (int dx = 0; dx < spatial_factor; ++dx) {
                        const int ch = ((r * 3 + c) * spatial_factor + dy) * spatial_factor + dx;
                        for (int y = 0; y < hl; ++y)
                            for (int x = 0; x < wl; ++x)
                                z.data(g, ch, y, x) =
                                    static_cast<S>(video(f, c, y * spatial_factor + dy, x * spatial_factor + dx));
                    }
        }
    return z;
}

/// Exact inverse of `encode`; frame 0 is read from the first replica of latent frame 0.
template <class S>
Video decode(const LatentTensor<S>& z) {
    if (z.has_ref_prefix) throw ShapeError("decode expects a latent without the reference prefix");
    if (z.channels() != latent_channels)
        throw ShapeError("latent has " + std::to_string(z.channels()) + " channels, expected " +
                         std::to_string(latent_channels));
    const int tl = z.frames(), hl = z.data.dim(2), wl = z.data.dim(3);
    if (tl < 1) throw ShapeError("empty latent");
    const int t = 1 + temporal_factor * (tl - 1);
    Video v(t, 3, hl * spatial_factor, wl * spatial_factor);
    for (int g = 0; g < tl; ++g)
        for (int r = 0; r < (g == 0 ? 1 : temporal_factor); ++r) {
            const int f = source_frame(g, r);
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < spatial_factor; ++dy)
                    for (int dx = 0; dx < spatial_factor; ++dx) {
                        const int ch = ((r * 3 + c) * spatial_factor + dy) * spatial_factor + dx;
                        for (int y = 0; y < hl; ++y)
                            for (int x = 0; x < wl; ++x)
                                v(f, c, y * spatial_factor + dy, x * spatial_factor + dx) =
                                    static_cast<float>(z.data(g, ch, y, x));
                    }
        }
    return v;
}

/// (1 - t) z + t eps.
template <class S>
LatentTensor<S> noise_latent(const LatentTensor<S>& z, S t, const LatentTensor<S>& eps) {
    if (!(t >= S(0) && t <= S(1))) throw DataError("noise level t must lie in [0, 1]");
    if (!z.data.same_shape(eps.data)) throw ShapeError("noise shape mismatch");
    LatentTensor<S> out{Tensor4<S>(z.data.dim(0), z.data.dim(1), z.data.dim(2), z.data.dim(3)), z.has_ref_prefix};
    for (std::size_t i = 0; i < z.data.size(); ++i) out.data.data[i] = (S(1) - t) * z.data.data[i] + t * eps.data.data[i];
    return out;
}

/// Concat_C([z_ref; noisy], [z_ref; z_src]).
template <class S>
JointLatent<S> build_joint(const LatentTensor<S>& z_ref, const LatentTensor<S>& noisy, const LatentTensor<S>& z_src) {
    if (z_ref.frames() != 1) throw ShapeError("reference latent must have exactly one frame");
    if (noisy.data.shape != z_src.data.shape) throw ShapeError("noisy and source latents differ in shape");
    const auto& s = z_src.data.shape;
    if (z_ref.data.dim(1) != s[1] || z_ref.data.dim(2) != s[2] || z_ref.data.dim(3) != s[3])
        throw ShapeError("reference latent differs from source in channel/spatial dims");
    const int tl = s[0], c = s[1], plane = s[2] * s[3];
    JointLatent<S> j{Tensor4<S>(tl + 1, 2 * c, s[2], s[3]), c};
    auto copy_frame = [&](const Tensor4<S>& src, int src_frame, int dst_frame, int channel_offset) {
        const S* from = src.data.data() + src.offset(src_frame, 0, 0, 0);
        S* to = j.data.data.data() + j.data.offset(dst_frame, channel_offset, 0, 0);
        std::copy(from, from + static_cast<std::size_t>(c) * plane, to);
    };
    copy_frame(z_ref.data, 0, 0, 0);
    copy_frame(z_ref.data, 0, 0, c);
    for (int f = 0; f < tl; ++f) {
        copy_frame(noisy.data, f, f + 1, 0);
        copy_frame(z_src.data, f, f + 1, c);
    }
    return j;
}

/// Rearranges F x Ch x H x W into non-overlapping p x p spatial patches:
/// one row per (frame, patch row, patch col), columns ordered (ch, dy, dx).
template <class S>
Matrix<S> patch_split(const Tensor4<S>& z, int p) {
    const int f = z.dim(0), ch = z.dim(1), h = z.dim(2), w = z.dim(3);
    if (p <= 0 || h % p || w % p) throw ShapeError("latent dims " + std::to_string(h) + "x" + std::to_string(w) +
                                                   " not divisible by patch " + std::to_string(p));
    const int gh = h / p, gw = w / p;
    Matrix<S> out(static_cast<Eigen::Index>(f) * gh * gw, static_cast<Eigen::Index>(ch) * p * p);
    Eigen::Index row = 0;
    for (int t = 0; t < f; ++t)
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx, ++row) {
                Eigen::Index col = 0;
                for (int c = 0; c < ch; ++c)
                    for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx) out(row, col++) = z(t, c, by * p + dy, bx * p + dx);
            }
    return out;
}

/// Inverse of `patch_split`.
template <class S>
Tensor4<S> patch_merge(const Matrix<S>& tokens, int frames, int channels, int h, int w, int p) {
    if (p <= 0 || h % p || w % p) throw ShapeError("unpatchify dims not divisible by patch");
    const int gh = h / p, gw = w / p;
    if (tokens.rows() != static_cast<Eigen::Index>(frames) * gh * gw || tokens.cols() != static_cast<Eigen::Index>(channels) * p * p)
        throw ShapeError("unpatchify token matrix is " + std::to_string(tokens.rows()) + "x" +
                         std::to_string(tokens.cols()));
    Tensor4<S> z(frames, channels, h, w);
    Eigen::Index row = 0;
    for (int t = 0; t < frames; ++t)
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx, ++row) {
                Eigen::Index col = 0;
                for (int c = 0; c < channels; ++c)
                    for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx) z(t, c, by * p + dy, bx * p + dx) = tokens(row, col++);
            }
    return z;
}

/// Slices frames [begin, begin + count) of a latent.
template <class S>
Tensor4<S> slice_frames(const Tensor4<S>& z, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > z.dim(0)) throw ShapeError("frame slice out of range");
    Tensor4<S> out(count, z.dim(1), z.dim(2), z.dim(3));
    std::copy(z.data.begin() + static_cast<std::ptrdiff_t>(z.offset(begin, 0, 0, 0)),
              z.data.begin() + static_cast<std::ptrdiff_t>(z.offset(begin, 0, 0, 0) + count * z.frame_size()),
              out.data.begin());
    return out;
}

/// Channels [begin, begin + count) of every frame.
template <class S>
Tensor4<S> slice_channels(const Tensor4<S>& z, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > z.dim(1)) throw ShapeError("channel slice out of range");
    Tensor4<S> out(z.dim(0), count, z.dim(2), z.dim(3));
    for (int f = 0; f < z.dim(0); ++f)
        std::copy(z.data.begin() + static_cast<std::ptrdiff_t>(z.offset(f, begin, 0, 0)),
                  z.data.begin() + static_cast<std::ptrdiff_t>(z.offset(f, begin, 0, 0) + count * z.plane_size()),
                  out.data.begin() + static_cast<std::ptrdiff_t>(out.offset(f, 0, 0, 0)));
    return out;
}

}  // namespace mive::codec
