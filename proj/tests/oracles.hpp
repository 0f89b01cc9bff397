#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Each one is written from first principles with plain
// loops so it does not reuse the code path it checks.

#include "mive/backbone.hpp"
#include "mive/stats.hpp"
#include "mive/toy_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace oracle {

using mive::Matrix;

/// Head-averaged full S x S attention of encoder layer `layer` (1-based)
/// recomputed from the layer input and the block weights, then cut to the
/// [text rows, visual columns] block.
inline Matrix<double> encoder_cross_block(mive::ToyEncoder<double>& enc, const mive::EncoderTrace<double>& trace,
                                          const mive::UnifiedContext<double>& ctx, int layer) {
    const auto& cfg = enc.config();
    const std::string prefix = "blocks." + std::to_string(layer - 1) + ".";
    Matrix<double> wq, wk;
    enc.for_each_parameter([&](const std::string& n, mive::Parameter<double>& p) {
        if (n == prefix + "wq") wq = p.value;
        if (n == prefix + "wk") wk = p.value;
    });
    const auto& h = trace.hidden[static_cast<std::size_t>(layer - 1)];
    const int s = static_cast<int>(h.rows()), d = cfg.width, dh = d / cfg.heads;
    auto rms = [](std::vector<double> r) {
        double m = 0;
        for (double v : r) m += v * v;
        const double inv = 1.0 / std::sqrt(m / static_cast<double>(r.size()) + 1e-6);
        for (double& v : r) v *= inv;
        return r;
    };
    std::vector<std::vector<double>> x(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) {
        std::vector<double> row(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = h(i, j);
        x[static_cast<std::size_t>(i)] = rms(row);
    }
    auto project = [&](const Matrix<double>& w, int i, int head) {
        std::vector<double> out(static_cast<std::size_t>(dh), 0.0);
        for (int c = 0; c < dh; ++c)
            for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(c)] += x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * w(j, head * dh + c);
        return rms(out);
    };
    Matrix<double> full = Matrix<double>::Zero(s, s);
    for (int head = 0; head < cfg.heads; ++head) {
        std::vector<std::vector<double>> q, k;
        for (int i = 0; i < s; ++i) {
            q.push_back(project(wq, i, head));
            k.push_back(project(wk, i, head));
        }
        for (int i = 0; i < s; ++i) {
            std::vector<double> e(static_cast<std::size_t>(s));
            double mx = -1e300;
            for (int j = 0; j < s; ++j) {
                double dot = 0;
                for (int c = 0; c < dh; ++c) dot += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] * k[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
                e[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, e[static_cast<std::size_t>(j)]);
            }
            double z = 0;
            for (double& v : e) z += (v = std::exp(v - mx));
            for (int j = 0; j < s; ++j) full(i, j) += e[static_cast<std::size_t>(j)] / z / cfg.heads;
        }
    }
    return full.block(0, ctx.text_count, ctx.text_count, ctx.visual_count);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check of the full conditioning -> patchify ->
// backbone -> head -> loss pipeline on a micro configuration.

struct GradCheckResult {
    int checked = 0;
    double max_rel_error = 0;
};

inline mive::ModelConfig micro_model_config(mive::Arch arch) {
    mive::ModelConfig mc;
    mc.adapter.vlm_width = 8;
    mc.adapter.width = 16;
    mc.backbone.width = 16;
    mc.backbone.depth = 2;
    mc.backbone.heads = 2;
    mc.backbone.mlp_ratio = 2;
    mc.backbone.patch = 2;
    mc.backbone.latent_channels = 2;
    mc.backbone.freq_dim = 8;
    mc.backbone.arch = arch;
    mc.seed = 11;
    return mc;
}

inline GradCheckResult gradient_check(mive::Arch arch, int samples, std::uint64_t seed, double h = 1e-5) {
    using namespace mive;
    EditModel<double> model(micro_model_config(arch));
    Rng rng(seed);
    // Random weights everywhere so zero-initialised gates and heads do not hide paths.
    model.for_each_parameter([&](const std::string&, Parameter<double>& p) { rng.fill_normal(p.value, 0.3); });

    EncoderFeatures<double> f;
    f.first = Matrix<double>(5, 8);
    f.last = Matrix<double>(5, 8);
    f.text = Matrix<double>(3, 8);
    f.image = Matrix<double>(2, 8);
    for (auto* m : {&f.first, &f.last, &f.text, &f.image}) rng.fill_normal(*m, 1.0);

    // (T'+1) = 2 latent frames of 2C x 4 x 4: N_v = 2 * 2 * 2 = 8 tokens.
    codec::JointLatent<double> z{Tensor4<double>(2, 4, 4, 4), 2};
    rng.fill_normal(z.data);
    const double t = 0.6;
    Matrix<double> target(8, 2 * 2 * 2), weights(8, 8);
    rng.fill_normal(target, 1.0);
    for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
    weights(0, 0) = 1.0;

    auto loss = [&](bool grad) {
        Tape<double> tape(grad);
        auto cond = model.condition(tape, f);
        auto out = model.velocity_tokens(tape, model.forward(tape, cond, z, t), z, t);
        auto l = ops::weighted_mse(out, target, weights);
        if (grad) tape.backward(l);
        return l.value()(0, 0);
    };
    model.zero_grad();
    loss(true);

    std::vector<std::pair<Parameter<double>*, Eigen::Index>> all;
    model.for_each_parameter([&](const std::string&, Parameter<double>& p) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) all.emplace_back(&p, i);
    });
    GradCheckResult r;
    for (int k = 0; k < samples; ++k) {
        auto [p, i] = all[static_cast<std::size_t>(rng.integer(0, static_cast<int>(all.size()) - 1))];
        const double orig = p->value.data()[i];
        p->value.data()[i] = orig + h;
        const double up = loss(false);
        p->value.data()[i] = orig - h;
        const double down = loss(false);
        p->value.data()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p->grad.data()[i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic) / denom);
        ++r.checked;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank exact p by enumerating all 2^n sign assignments:
// the fraction whose W+ is at least as far from n(n+1)/4 as the observed one.

inline double wilcoxon_enumerated_p(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> d;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) d.push_back(x[i] - y[i]);
    const int n = static_cast<int>(d.size());
    if (n == 0) return 1.0;
    // Doubled average ranks by counting smaller and equal magnitudes.
    std::vector<long> r2(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        long less = 0, equal = 0;
        for (int j = 0; j < n; ++j) {
            if (std::abs(d[static_cast<std::size_t>(j)]) < std::abs(d[static_cast<std::size_t>(i)])) ++less;
            else if (std::abs(d[static_cast<std::size_t>(j)]) == std::abs(d[static_cast<std::size_t>(i)])) ++equal;
        }
        r2[static_cast<std::size_t>(i)] = 2 * less + equal + 1;
    }
    long total = 0, observed = 0;
    for (int i = 0; i < n; ++i) {
        total += r2[static_cast<std::size_t>(i)];
        if (d[static_cast<std::size_t>(i)] > 0) observed += r2[static_cast<std::size_t>(i)];
    }
    // Compare 2 * |W+ - total/2| in doubled units to stay in integers.
    const long obs_dev = std::labs(2 * observed - total);
    long hits = 0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        long w = 0;
        for (int i = 0; i < n; ++i)
            if (mask & (1L << i)) w += r2[static_cast<std::size_t>(i)];
        if (std::labs(2 * w - total) >= obs_dev) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(1L << n);
}

// ---------------------------------------------------------------------------
// Krippendorff's ordinal alpha from explicit value pairs within units.

inline double krippendorff_pairwise(const mive::stats::RatingTable& r) {
    const std::size_t items = r.front().size();
    std::vector<std::vector<double>> units;
    for (std::size_t u = 0; u < items; ++u) {
        std::vector<double> vals;
        for (const auto& row : r)
            if (row[u]) vals.push_back(*row[u]);
        if (vals.size() >= 2) units.push_back(vals);
    }
    std::map<double, double> count;
    double n = 0;
    for (const auto& u : units)
        for (double v : u) {
            count[v] += 1;
            n += 1;
        }
    auto delta = [&](double a, double b) {
        if (a > b) std::swap(a, b);
        double s = 0;
        for (const auto& [v, c] : count)
            if (v >= a && v <= b) s += c;
        s -= (count[a] + count[b]) / 2.0;
        return s * s;
    };
    double d_o = 0;
    for (const auto& u : units) {
        double s = 0;
        for (std::size_t i = 0; i < u.size(); ++i)
            for (std::size_t j = 0; j < u.size(); ++j)
                if (i != j) s += delta(u[i], u[j]);
        d_o += s / static_cast<double>(u.size() - 1);
    }
    d_o /= n;
    std::vector<double> pooled;
    for (const auto& u : units) pooled.insert(pooled.end(), u.begin(), u.end());
    double d_e = 0;
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = 0; j < pooled.size(); ++j)
            if (i != j) d_e += delta(pooled[i], pooled[j]);
    d_e /= n * (n - 1);
    if (d_o == 0) return 1.0;
    return 1.0 - d_o / d_e;
}

}  // namespace oracle
