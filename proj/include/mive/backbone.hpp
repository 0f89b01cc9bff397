#pragma once

// Diffusion transformer with per-token adaptive layer norm. Condition tokens
// and reference-frame patches are modulated with the t = 0 embedding, the
// remaining visual patches with the current t. Besides the unified
// self-attention layout, three cross-attention conditioning variants are
// available through BackboneConfig::arch.

#include "mive/autograd.hpp"
#include "mive/context_adapter.hpp"
#include "mive/latent_codec.hpp"
#include "mive/rng.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mive {

enum class Arch { decoupled_dual_xattn, unified_dual_xattn, unified_fused_xattn, unified_self_attn };
enum class PredictionTarget { velocity, x0 };

inline const char* to_string(Arch a) {
    switch (a) {
        case Arch::decoupled_dual_xattn: return "decoupled_dual_xattn";
        case Arch::unified_dual_xattn: return "unified_dual_xattn";
        case Arch::unified_fused_xattn: return "unified_fused_xattn";
        case Arch::unified_self_attn: return "unified_self_attn";
    }
    return "?";
}

inline Arch parse_arch(const std::string& s) {
    for (Arch a : {Arch::decoupled_dual_xattn, Arch::unified_dual_xattn, Arch::unified_fused_xattn,
                   Arch::unified_self_attn})
        if (s == to_string(a)) return a;
    throw UsageError("unknown arch '" + s + "'");
}

inline const char* to_string(PredictionTarget p) { return p == PredictionTarget::velocity ? "velocity" : "x0"; }
inline PredictionTarget parse_prediction_target(const std::string& s) {
    if (s == "velocity") return PredictionTarget::velocity;
    if (s == "x0") return PredictionTarget::x0;
    throw UsageError("unknown prediction target '" + s + "'");
}

struct BackboneConfig {
    int width = 256;  // D
    int depth = 4;    // P
    int heads = 4;
    int mlp_ratio = 4;
    int patch = 2;
    int latent_channels = codec::latent_channels;
    int freq_dim = 256;
    Arch arch = Arch::unified_self_attn;
    PredictionTarget target = PredictionTarget::x0;
    // x0 outputs are turned into velocities as (z_t - x0) / max(t, x0_min_t).
    double x0_min_t = 0.05;
    int cond_position_offset = 64;
    double norm_eps = 1e-6;
};

/// Token bookkeeping for u0 = [c; v]: positions and clean flags of the visual tokens.
struct TokenLayout {
    int condition_count = 0;
    std::vector<std::array<int, 3>> visual_positions;  // (t, h, w)
    std::vector<bool> visual_clean;

    static TokenLayout standard(int condition_count, int frames, int grid_h, int grid_w, int clean_frames = 1) {
        TokenLayout l;
        l.condition_count = condition_count;
        for (int t = 0; t < frames; ++t)
            for (int y = 0; y < grid_h; ++y)
                for (int x = 0; x < grid_w; ++x) {
                    l.visual_positions.push_back({t, y, x});
                    l.visual_clean.push_back(t < clean_frames);
                }
        return l;
    }

    int visual_count() const { return static_cast<int>(visual_positions.size()); }
    int total() const { return condition_count + visual_count(); }

    std::vector<bool> clean_mask() const {
        std::vector<bool> m(static_cast<std::size_t>(condition_count), true);
        m.insert(m.end(), visual_clean.begin(), visual_clean.end());
        return m;
    }
    /// Row selector into the [t=0; t] modulation pair.
    std::vector<int> selector() const {
        std::vector<int> s;
        for (bool c : clean_mask()) s.push_back(c ? 0 : 1);
        return s;
    }
};

/// Factorized additive sinusoids: 1D (index + offset) for condition tokens,
/// per-axis (t, h, w) blocks for visual tokens.
template <class S>
Matrix<S> positional_encoding(const TokenLayout& layout, int width, int cond_offset) {
    Matrix<S> pe(layout.total(), width);
    for (int i = 0; i < layout.condition_count; ++i) pe.row(i) = detail::sinusoid<S>(i + cond_offset, width);
    const int dh = 2 * (width / 6), dw = dh, dt = width - dh - dw;
    for (int i = 0; i < layout.visual_count(); ++i) {
        const auto& p = layout.visual_positions[static_cast<std::size_t>(i)];
        auto row = pe.row(layout.condition_count + i);
        row.segment(0, dt) = detail::sinusoid<S>(p[0], dt, 100.0);
        row.segment(dt, dh) = detail::sinusoid<S>(p[1], dh, 100.0);
        row.segment(dt + dh, dw) = detail::sinusoid<S>(p[2], dw, 100.0);
    }
    return pe;
}

template <class S>
struct CrossAttention {
    Parameter<S> q_w, q_b, kv_w, kv_b, out_w, out_b;
};

template <class S>
struct DiTBlock {
    Parameter<S> ada_w, ada_b;  // D -> 6D: shift/scale/gate (attn), shift/scale/gate (mlp)
    Parameter<S> qkv_w, qkv_b, out_w, out_b;
    Parameter<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    std::vector<CrossAttention<S>> cross;
};

/// Conditioning on the tape: an optional prefix for self-attention and the
/// key/value streams of the cross-attention sublayers.
template <class S>
struct ConditionVars {
    std::optional<Var<S>> prefix;
    std::vector<Var<S>> cross;
};

/// The same conditioning as plain matrices, for reuse across denoising steps.
template <class S>
struct ConditionStreams {
    std::optional<Matrix<S>> prefix;
    std::vector<Matrix<S>> cross;

    ConditionVars<S> on(Tape<S>& t) const {
        ConditionVars<S> v;
        if (prefix) v.prefix = t.constant(*prefix);
        for (const auto& c : cross) v.cross.push_back(t.constant(c));
        return v;
    }
};

/// Optional capture of internals during a forward pass.
template <class S>
struct ForwardProbe {
    std::vector<Matrix<S>> modulation;                   // per block, N x 6D as applied
    std::vector<std::vector<Matrix<S>>> attention;       // per block, per head
    std::vector<Matrix<S>> final_modulation;             // N_v x 2D
};

struct ModelConfig {
    AdapterConfig adapter;
    BackboneConfig backbone;
    LayerMode layer_mode = LayerMode::first_last;
    std::uint64_t seed = 7;
};

template <class S>
class EditModel {
public:
    EditModel() = default;
    explicit EditModel(const ModelConfig& cfg) : cfg_(cfg) {
        const auto& b = cfg_.backbone;
        if (b.width % b.heads) throw ShapeError("backbone width must be divisible by heads");
        if (cfg_.adapter.width != b.width) throw ShapeError("adapter width must equal backbone width");
        Rng rng(cfg_.seed);
        adapter_ = ContextAdapter<S>(cfg_.adapter, rng);
        const int d = b.width, in = 2 * b.latent_channels * b.patch * b.patch,
                  out = b.latent_channels * b.patch * b.patch;
        auto dense = [&](Parameter<S>& p, int rows, int cols, double std) {
            p = Parameter<S>(rows, cols);
            if (std > 0) rng.fill_normal(p.value, std);
        };
        auto fan = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
        dense(t_w1_, b.freq_dim, d, fan(b.freq_dim));
        dense(t_b1_, 1, d, 0);
        dense(t_w2_, d, d, fan(d));
        dense(t_b2_, 1, d, 0);
        dense(patch_w_, in, d, fan(in));
        dense(patch_b_, 1, d, 0);
        const int streams = cross_stream_count(b.arch);
        const int kv_in = b.arch == Arch::unified_dual_xattn ? d / 2 : d;
        blocks_.resize(static_cast<std::size_t>(b.depth));
        for (auto& blk : blocks_) {
            dense(blk.ada_w, d, 6 * d, 0.02);
            blk.ada_w.value.middleCols(2 * d, d).setZero();  // attention gate
            blk.ada_w.value.middleCols(5 * d, d).setZero();  // mlp gate
            dense(blk.ada_b, 1, 6 * d, 0);
            dense(blk.qkv_w, d, 3 * d, fan(d));
            dense(blk.qkv_b, 1, 3 * d, 0);
            dense(blk.out_w, d, d, fan(d));
            dense(blk.out_b, 1, d, 0);
            dense(blk.mlp_w1, d, b.mlp_ratio * d, fan(d));
            dense(blk.mlp_b1, 1, b.mlp_ratio * d, 0);
            dense(blk.mlp_w2, b.mlp_ratio * d, d, fan(b.mlp_ratio * d));
            dense(blk.mlp_b2, 1, d, 0);
            blk.cross.resize(static_cast<std::size_t>(streams));
            for (auto& x : blk.cross) {
                dense(x.q_w, d, d, fan(d));
                dense(x.q_b, 1, d, 0);
                dense(x.kv_w, kv_in, 2 * d, fan(kv_in));
                dense(x.kv_b, 1, 2 * d, 0);
                dense(x.out_w, d, d, 0.02);
                dense(x.out_b, 1, d, 0);
            }
        }
        dense(final_ada_w_, d, 2 * d, 0.02);
        dense(final_ada_b_, 1, 2 * d, 0);
        dense(head_w_, d, out, 0);
        dense(head_b_, 1, out, 0);
    }

    const ModelConfig& config() const { return cfg_; }
    ModelConfig& mutable_config() { return cfg_; }
    ContextAdapter<S>& adapter() { return adapter_; }
    std::vector<DiTBlock<S>>& blocks() { return blocks_; }
    Parameter<S>& head_weight() { return head_w_; }
    Parameter<S>& head_bias() { return head_b_; }

    static int cross_stream_count(Arch a) {
        switch (a) {
            case Arch::decoupled_dual_xattn:
            case Arch::unified_dual_xattn: return 2;
            case Arch::unified_fused_xattn: return 1;
            case Arch::unified_self_attn: return 0;
        }
        return 0;
    }

    template <class F>
    void for_each_parameter(F&& f) {
        adapter_.for_each_parameter(f);
        f("time.w1", t_w1_);
        f("time.b1", t_b1_);
        f("time.w2", t_w2_);
        f("time.b2", t_b2_);
        f("patch.w", patch_w_);
        f("patch.b", patch_b_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            auto& b = blocks_[i];
            f(p + "ada_w", b.ada_w);
            f(p + "ada_b", b.ada_b);
            f(p + "qkv_w", b.qkv_w);
            f(p + "qkv_b", b.qkv_b);
            f(p + "out_w", b.out_w);
            f(p + "out_b", b.out_b);
            f(p + "mlp_w1", b.mlp_w1);
            f(p + "mlp_b1", b.mlp_b1);
            f(p + "mlp_w2", b.mlp_w2);
            f(p + "mlp_b2", b.mlp_b2);
            for (std::size_t j = 0; j < b.cross.size(); ++j) {
                const std::string q = p + "cross." + std::to_string(j) + ".";
                auto& x = b.cross[j];
                f(q + "q_w", x.q_w);
                f(q + "q_b", x.q_b);
                f(q + "kv_w", x.kv_w);
                f(q + "kv_b", x.kv_b);
                f(q + "out_w", x.out_w);
                f(q + "out_b", x.out_b);
            }
        }
        f("final.ada_w", final_ada_w_);
        f("final.ada_b", final_ada_b_);
        f("head.w", head_w_);
        f("head.b", head_b_);
    }

    void zero_grad() {
        for_each_parameter([](const std::string&, Parameter<S>& p) { p.zero_grad(); });
    }

    // ---------------------------------------------------------------------
    // Timestep embedding: sinusoid of 1000 t, then Linear-SiLU-Linear.

    Var<S> time_embed(Tape<S>& tape, S t) {
        if (!(t >= S(0) && t <= S(1))) throw DataError("timestep must lie in [0, 1]");
        auto freq = tape.constant(Matrix<S>(detail::sinusoid<S>(static_cast<double>(t) * 1000.0, cfg_.backbone.freq_dim)));
        auto h = ops::silu(ops::linear(tape, freq, t_w1_, t_b1_));
        return ops::linear(tape, h, t_w2_, t_b2_);
    }

    // ---------------------------------------------------------------------
    // Conditioning per architecture.

    ConditionVars<S> condition(Tape<S>& tape, const EncoderFeatures<S>& f) {
        ConditionVars<S> c;
        switch (cfg_.backbone.arch) {
            case Arch::unified_self_attn: c.prefix = adapter_.select_layers(tape, f, cfg_.layer_mode); break;
            case Arch::unified_fused_xattn: c.cross.push_back(adapter_.select_layers(tape, f, cfg_.layer_mode)); break;
            case Arch::unified_dual_xattn:
                c.cross.push_back(adapter_.project_layer(tape, tape.constant(f.first), Branch::first));
                c.cross.push_back(adapter_.project_layer(tape, tape.constant(f.last), Branch::last));
                break;
            case Arch::decoupled_dual_xattn:
                c.cross.push_back(adapter_.project_text(tape, f.text));
                c.cross.push_back(adapter_.project_image(tape, f.image));
                break;
        }
        return c;
    }

    ConditionStreams<S> condition_streams(const EncoderFeatures<S>& f) {
        Tape<S> tape(false);
        auto v = condition(tape, f);
        ConditionStreams<S> out;
        if (v.prefix) out.prefix = v.prefix->value();
        for (auto& c : v.cross) out.cross.push_back(c.value());
        return out;
    }

    // ---------------------------------------------------------------------
    // Patch embedding of a joint latent: N_v x D, temporal-major then row-major.

    Var<S> patchify(Tape<S>& tape, const codec::JointLatent<S>& z) {
        if (z.data.dim(1) != 2 * cfg_.backbone.latent_channels) throw ShapeError("joint latent channel count");
        auto raw = tape.constant(codec::patch_split(z.data, cfg_.backbone.patch));
        return ops::linear(tape, raw, patch_w_, patch_b_);
    }

    TokenLayout layout_for(const codec::JointLatent<S>& z, int condition_count) const {
        const int p = cfg_.backbone.patch;
        return TokenLayout::standard(condition_count, z.data.dim(0), z.data.dim(2) / p, z.data.dim(3) / p, 1);
    }

    // ---------------------------------------------------------------------
    // P blocks over u0 (N x D). `cross` holds per-sublayer key/value streams;
    // a block applies only as many cross sublayers as streams are given.

    Var<S> dit_forward(Tape<S>& tape, Var<S> u0, const TokenLayout& layout, S t, const std::vector<Var<S>>& cross = {},
                       ForwardProbe<S>* probe = nullptr) {
        const auto& b = cfg_.backbone;
        const int d = b.width;
        if (u0.rows() != layout.total() || u0.cols() != d)
            throw ShapeError("unified sequence is " + std::to_string(u0.rows()) + "x" + std::to_string(u0.cols()) +
                             ", layout expects " + std::to_string(layout.total()) + "x" + std::to_string(d));
        const S eps = static_cast<S>(b.norm_eps);
        auto x = ops::add(u0, tape.constant(positional_encoding<S>(layout, d, b.cond_position_offset)));
        auto temb = time_pair(tape, t);
        const auto selector = layout.selector();
        for (auto& blk : blocks_) {
            auto mod = ops::gather_rows(ops::linear(tape, temb, blk.ada_w, blk.ada_b), selector);
            if (probe) probe->modulation.push_back(mod.value());
            auto piece = [&](int i) { return ops::slice_cols(mod, static_cast<Eigen::Index>(i) * d, d); };

            auto h = ops::modulate(ops::layer_norm(x, eps), piece(0), piece(1));
            auto qkv = ops::linear(tape, h, blk.qkv_w, blk.qkv_b);
            std::vector<Matrix<S>> probs;
            auto a = ops::attention(ops::slice_cols(qkv, 0, d), ops::slice_cols(qkv, d, d), ops::slice_cols(qkv, 2 * d, d),
                                    b.heads, probe ? &probs : nullptr);
            if (probe) probe->attention.push_back(std::move(probs));
            x = ops::add(x, ops::mul(piece(2), ops::linear(tape, a, blk.out_w, blk.out_b)));

            for (std::size_t j = 0; j < cross.size() && j < blk.cross.size(); ++j) {
                if (cross[j].rows() == 0) continue;
                auto& xa = blk.cross[j];
                auto q = ops::linear(tape, ops::layer_norm(x, eps), xa.q_w, xa.q_b);
                auto kv = ops::linear(tape, cross[j], xa.kv_w, xa.kv_b);
                auto o = ops::attention(q, ops::slice_cols(kv, 0, d), ops::slice_cols(kv, d, d), b.heads);
                x = ops::add(x, ops::linear(tape, o, xa.out_w, xa.out_b));
            }

            h = ops::modulate(ops::layer_norm(x, eps), piece(3), piece(4));
            auto m = ops::linear(tape, ops::gelu(ops::linear(tape, h, blk.mlp_w1, blk.mlp_b1)), blk.mlp_w2, blk.mlp_b2);
            x = ops::add(x, ops::mul(piece(5), m));
        }
        if (!x.value().allFinite()) throw NumericError("non-finite activations in backbone");
        return x;
    }

    /// Drops the first `condition_count` rows, then final modulated norm and
    /// linear head: N_v x (C p^2).
    Var<S> output_head(Tape<S>& tape, Var<S> u, const TokenLayout& layout, S t, ForwardProbe<S>* probe = nullptr) {
        if (u.rows() != layout.total()) throw ShapeError("output head: sequence/layout mismatch");
        const int d = cfg_.backbone.width;
        auto vis = ops::slice_rows(u, layout.condition_count, layout.visual_count());
        std::vector<int> sel;
        for (bool c : layout.visual_clean) sel.push_back(c ? 0 : 1);
        auto mod = ops::gather_rows(ops::linear(tape, time_pair(tape, t), final_ada_w_, final_ada_b_), sel);
        if (probe) probe->final_modulation.push_back(mod.value());
        auto h = ops::modulate(ops::layer_norm(vis, static_cast<S>(cfg_.backbone.norm_eps)), ops::slice_cols(mod, 0, d),
                               ops::slice_cols(mod, d, d));
        return ops::linear(tape, h, head_w_, head_b_);
    }

    /// Raw head output for a joint latent (x0 or velocity, per config), token layout.
    Var<S> forward(Tape<S>& tape, const ConditionVars<S>& cond, const codec::JointLatent<S>& z, S t,
                   ForwardProbe<S>* probe = nullptr) {
        auto v = patchify(tape, z);
        Var<S> u0 = v;
        int n_cond = 0;
        if (cond.prefix) {
            u0 = ops::concat_rows<S>({*cond.prefix, v});
            n_cond = static_cast<int>(cond.prefix->rows());
        }
        const TokenLayout layout = layout_for(z, n_cond);
        auto u = dit_forward(tape, u0, layout, t, cond.cross, probe);
        return output_head(tape, u, layout, t, probe);
    }

    /// Velocity tokens from the raw head output.
    Var<S> velocity_tokens(Tape<S>& tape, Var<S> head_out, const codec::JointLatent<S>& z, S t) {
        if (cfg_.backbone.target == PredictionTarget::velocity) return head_out;
        const auto noisy = codec::slice_channels(z.data, 0, cfg_.backbone.latent_channels);
        auto zt = tape.constant(codec::patch_split(noisy, cfg_.backbone.patch));
        const S denom = std::max(t, static_cast<S>(cfg_.backbone.x0_min_t));
        return ops::scale(ops::sub(zt, head_out), S(1) / denom);
    }

    /// Predicted velocity latent (T'+1) x C x H' x W', no gradient tracking.
    Tensor4<S> predict_velocity(const ConditionStreams<S>& cond, const codec::JointLatent<S>& z, S t,
                                ForwardProbe<S>* probe = nullptr) {
        Tape<S> tape(false);
        auto out = velocity_tokens(tape, forward(tape, cond.on(tape), z, t, probe), z, t);
        return unpatchify(out.value(), z);
    }

    Tensor4<S> unpatchify(const Matrix<S>& tokens, const codec::JointLatent<S>& z) const {
        return codec::patch_merge(tokens, z.data.dim(0), cfg_.backbone.latent_channels, z.data.dim(2), z.data.dim(3),
                                  cfg_.backbone.patch);
    }

    io::Blob to_blob(io::Dtype dtype = io::Dtype::float32) {
        io::Blob blob;
        blob.dtype = dtype;
        for_each_parameter([&](const std::string& n, Parameter<S>& p) { blob.add(n, p.value); });
        return blob;
    }
    void load_blob(const io::Blob& blob) {
        for_each_parameter([&](const std::string& n, Parameter<S>& p) { blob.load_into(n, p.value); });
    }

private:
    /// [temb(0); temb(t)] after SiLU, computed as two independent rows so the
    /// clean row never depends on t.
    Var<S> time_pair(Tape<S>& tape, S t) {
        auto clean = ops::silu(time_embed(tape, S(0)));
        auto noisy = ops::silu(time_embed(tape, t));
        return ops::concat_rows<S>({clean, noisy});
    }

    ModelConfig cfg_;
    ContextAdapter<S> adapter_;
    Parameter<S> t_w1_, t_b1_, t_w2_, t_b2_;
    Parameter<S> patch_w_, patch_b_;
    std::vector<DiTBlock<S>> blocks_;
    Parameter<S> final_ada_w_, final_ada_b_, head_w_, head_b_;
};

}  // namespace mive
