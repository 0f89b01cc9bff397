#pragma once

// Structural similarity on luma (0.299 R + 0.587 G + 0.114 B), 11x11
// Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.
// Only windows fully inside the image contribute ("valid" convolution).

#include "mive/core.hpp"

#include <cmath>

namespace mive::eval {

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

inline Eigen::MatrixXd gaussian_window(int size, double sigma) {
    Eigen::VectorXd g(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) g[i] = std::exp(-((i - c) * (i - c)) / (2 * sigma * sigma));
    g /= g.sum();
    return g * g.transpose();
}

inline Eigen::MatrixXd luma_plane(const Video& v, int t) {
    Eigen::MatrixXd m(v.dim(2), v.dim(3));
    for (int y = 0; y < v.dim(2); ++y)
        for (int x = 0; x < v.dim(3); ++x)
            m(y, x) = 0.299 * v(t, 0, y, x) + 0.587 * v(t, 1, y, x) + 0.114 * v(t, 2, y, x);
    return m;
}

/// SSIM of two single-channel planes.
inline double ssim_plane(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimConfig& cfg = {}) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ssim: shape mismatch");
    const int k = cfg.window;
    if (a.rows() < k || a.cols() < k) throw ShapeError("ssim: image smaller than the " + std::to_string(k) + "px window");
    const Eigen::MatrixXd w = gaussian_window(k, cfg.sigma);
    const double c1 = (cfg.k1 * cfg.range) * (cfg.k1 * cfg.range);
    const double c2 = (cfg.k2 * cfg.range) * (cfg.k2 * cfg.range);
    const Eigen::Index oh = a.rows() - k + 1, ow = a.cols() - k + 1;
    double total = 0;
    for (Eigen::Index y = 0; y < oh; ++y)
        for (Eigen::Index x = 0; x < ow; ++x) {
            const auto pa = a.block(y, x, k, k).array();
            const auto pb = b.block(y, x, k, k).array();
            const auto wa = w.array();
            // Products grouped as w * (a * b) so swapping a and b is bit-exact.
            const double mu_a = (wa * pa).sum(), mu_b = (wa * pb).sum();
            const double var_a = (wa * (pa * pa)).sum() - mu_a * mu_a;
            const double var_b = (wa * (pb * pb)).sum() - mu_b * mu_b;
            const double cov = (wa * (pa * pb)).sum() - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    return total / static_cast<double>(oh * ow);
}

/// Mean per-frame SSIM of two videos (or single-frame images).
inline double ssim(const Video& a, const Video& b, const SsimConfig& cfg = {}) {
    if (!a.same_shape(b)) throw ShapeError("ssim: " + shape_string(a.shape) + " vs " + shape_string(b.shape));
    if (a.dim(1) != 3) throw ShapeError("ssim expects RGB input");
    double s = 0;
    for (int t = 0; t < a.dim(0); ++t) s += ssim_plane(luma_plane(a, t), luma_plane(b, t), cfg);
    return s / a.dim(0);
}

}  // namespace mive::eval
