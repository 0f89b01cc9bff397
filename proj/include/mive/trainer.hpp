#pragma once

// Flow-matching training: z_t = (1 - t) z_tgt + t eps, velocity target
// eps - z_tgt, MSE over every latent frame except the prepended reference.
// Encoders and codec are frozen; adapter, backbone and head are trained
// with AdamW, linear warmup and global-norm gradient clipping.

#include "mive/backbone.hpp"
#include "mive/config.hpp"
#include "mive/io.hpp"
#include "mive/latent_codec.hpp"
#include "mive/rng.hpp"
#include "mive/toy_encoder.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace mive {

struct TrainConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    int warmup_steps = 200;
    double grad_clip = 1.0;
    int total_steps = 8000;
    int batch_size = 1;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: only at the end
    int log_every = 1;
};

inline json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"weight_decay", c.weight_decay},
            {"warmup_steps", c.warmup_steps},
            {"grad_clip", c.grad_clip},
            {"total_steps", c.total_steps},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"log_every", c.log_every}};
}

inline void from_json(const json& j, TrainConfig& c) {
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
}

inline void validate(const TrainConfig& c) {
    if (!(c.lr >= 0)) throw UsageError("learning rate must be non-negative");
    if (c.warmup_steps < 0 || c.warmup_steps > c.total_steps) throw UsageError("warmup must lie in [0, total_steps]");
    if (!(c.grad_clip > 0)) throw UsageError("grad_clip must be positive");
    if (c.batch_size < 1) throw UsageError("batch_size must be >= 1");
}

/// Mean squared error between pred_v and eps - z_tgt over frames whose mask entry is true.
template <class S>
S fm_loss(const Tensor4<S>& pred_v, const Tensor4<S>& z_tgt, const Tensor4<S>& eps, const std::vector<bool>& frame_mask) {
    if (!pred_v.same_shape(z_tgt) || !pred_v.same_shape(eps)) throw ShapeError("fm_loss operand shapes differ");
    if (frame_mask.size() != static_cast<std::size_t>(pred_v.dim(0))) throw ShapeError("fm_loss mask length");
    S sum = S(0);
    std::size_t count = 0;
    const std::size_t fs = pred_v.frame_size();
    for (int f = 0; f < pred_v.dim(0); ++f) {
        if (!frame_mask[static_cast<std::size_t>(f)]) continue;
        for (std::size_t i = f * fs; i < (f + 1) * fs; ++i) {
            const S d = pred_v.data[i] - (eps.data[i] - z_tgt.data[i]);
            sum += d * d;
        }
        count += fs;
    }
    if (count == 0) throw DataError("fm_loss: empty mask");
    return sum / static_cast<S>(count);
}

/// Every frame except temporal index 0.
inline std::vector<bool> reference_excluded_mask(int frames) {
    std::vector<bool> m(static_cast<std::size_t>(frames), true);
    if (frames > 0) m[0] = false;
    return m;
}

/// Frozen, precomputed inputs of one training pair.
template <class S>
struct PreparedSample {
    std::string id;
    EncoderFeatures<S> features;
    codec::LatentTensor<S> z_src, z_tgt, z_ref;
};

template <class S>
PreparedSample<S> prepare_sample(const EncoderSuite<S>& enc, const Vocabulary& vocab, const AdapterConfig& acfg,
                                 const std::string& id, const Video& src, const Video& tgt, const Video& ref,
                                 const std::string& instruction) {
    PreparedSample<S> p;
    p.id = id;
    const TokenIds tokens = vocab.tokenize(instruction);
    auto [ctx, trace] = enc.unified.encode_unified(tokens, &ref, src);
    p.features = extract_features(enc, trace, tokens, ref, acfg);
    p.z_src = codec::encode<S>(src);
    p.z_tgt = codec::encode<S>(tgt);
    p.z_ref = codec::encode<S>(ref);
    return p;
}

template <class S>
struct AdamWState {
    std::vector<Matrix<S>> m, v;
    long step = 0;
};

struct StepMetrics {
    long step = 0;
    double loss = 0;
    double grad_norm = 0;
    double lr = 0;
};

/// Scales gradients in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
template <class S>
double clip_gradients(EditModel<S>& model, double max_norm) {
    double sq = 0;
    model.for_each_parameter([&](const std::string&, Parameter<S>& p) {
        sq += static_cast<double>(p.grad.squaredNorm());
    });
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const S factor = static_cast<S>(max_norm / norm);
        model.for_each_parameter([&](const std::string&, Parameter<S>& p) { p.grad *= factor; });
    }
    return norm;
}

inline double warmup_lr(double base, long step, int warmup) {
    if (warmup <= 0 || step >= warmup) return base;
    return base * static_cast<double>(step) / static_cast<double>(warmup);
}

template <class S>
class Trainer {
public:
    Trainer(EditModel<S> model, TrainConfig cfg) : model_(std::move(model)), cfg_(cfg), rng_(cfg.seed) {
        validate(cfg_);
        model_.for_each_parameter([&](const std::string&, Parameter<S>& p) {
            opt_.m.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
            opt_.v.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
        });
    }

    EditModel<S>& model() { return model_; }
    const TrainConfig& config() const { return cfg_; }
    TrainConfig& mutable_config() { return cfg_; }
    long step() const { return opt_.step; }
    Rng& rng() { return rng_; }

    /// Loss and parameter gradients (accumulated into Parameter::grad) of one
    /// sample at a given noise level and noise draw.
    S sample_loss_and_grad(const PreparedSample<S>& s, S t, const codec::LatentTensor<S>& eps, S grad_scale) {
        const auto noisy = codec::noise_latent(s.z_tgt, t, eps);
        const auto joint = codec::build_joint(s.z_ref, noisy, s.z_src);
        Tape<S> tape(true);
        auto cond = model_.condition(tape, s.features);
        auto head = model_.forward(tape, cond, joint, t);
        auto pred_v = model_.velocity_tokens(tape, head, joint, t);
        auto [target, weights] = velocity_target_tokens(s, eps);
        auto loss = ops::weighted_mse(pred_v, target, weights);
        const S value = loss.value()(0, 0);
        if (!std::isfinite(static_cast<double>(value)))
            throw NumericError("non-finite loss at step " + std::to_string(opt_.step + 1) + " (sample " + s.id +
                               ", t=" + std::to_string(static_cast<double>(t)) + ")");
        auto scaled = ops::scale(loss, grad_scale);
        tape.backward(scaled);
        return value;
    }

    /// One optimizer step on the given samples.
    StepMetrics train_step(const std::vector<const PreparedSample<S>*>& batch) {
        if (batch.empty()) throw DataError("empty batch");
        model_.zero_grad();
        double loss_sum = 0;
        const S inv_b = S(1) / static_cast<S>(batch.size());
        for (const auto* s : batch) {
            const S t = static_cast<S>(rng_.uniform());
            codec::LatentTensor<S> eps{Tensor4<S>(s->z_tgt.data.dim(0), s->z_tgt.data.dim(1), s->z_tgt.data.dim(2),
                                                  s->z_tgt.data.dim(3)),
                                       false};
            rng_.fill_normal(eps.data);
            loss_sum += static_cast<double>(sample_loss_and_grad(*s, t, eps, inv_b));
        }
        StepMetrics m;
        m.grad_norm = clip_gradients(model_, cfg_.grad_clip);
        if (!std::isfinite(m.grad_norm)) throw NumericError("non-finite gradient norm at step " + std::to_string(opt_.step + 1));
        ++opt_.step;
        m.step = opt_.step;
        m.lr = warmup_lr(cfg_.lr, opt_.step, cfg_.warmup_steps);
        apply_adamw(m.lr);
        m.loss = loss_sum / static_cast<double>(batch.size());
        return m;
    }

    /// Batch for the next step: a seeded shuffle-free draw without replacement.
    std::vector<const PreparedSample<S>*> next_batch(const std::vector<PreparedSample<S>>& data) {
        if (data.empty()) throw DataError("empty dataset");
        std::vector<const PreparedSample<S>*> out;
        const int n = static_cast<int>(data.size());
        if (cfg_.batch_size >= n) {
            for (const auto& s : data) out.push_back(&s);
            return out;
        }
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < cfg_.batch_size; ++i) {
            const int j = rng_.integer(i, n - 1);
            std::swap(idx[i], idx[j]);
            out.push_back(&data[static_cast<std::size_t>(idx[i])]);
        }
        return out;
    }

    // ---------------------------------------------------------------------
    // Checkpoints: weights.bin, optimizer.bin, state.json.

    io::Dtype checkpoint_dtype() const { return sizeof(S) == 4 ? io::Dtype::float32 : io::Dtype::float64; }

    void save_checkpoint(const std::filesystem::path& dir, const json& extra = json::object()) {
        std::filesystem::create_directories(dir);
        io::write_blob(dir / "weights.bin", model_.to_blob(checkpoint_dtype()));
        io::Blob opt;
        opt.dtype = checkpoint_dtype();
        std::size_t i = 0;
        model_.for_each_parameter([&](const std::string& n, Parameter<S>&) {
            opt.add("m." + n, opt_.m[i]);
            opt.add("v." + n, opt_.v[i]);
            ++i;
        });
        io::write_blob(dir / "optimizer.bin", opt);
        json state = extra;
        state["model"] = to_json(model_.config());
        state["train"] = to_json(cfg_);
        state["step"] = opt_.step;
        state["rng"] = rng_.save();
        io::write_json(dir / "state.json", state);
    }

    void load_checkpoint(const std::filesystem::path& dir) {
        const json state = io::read_json(dir / "state.json");
        model_.load_blob(io::read_blob(dir / "weights.bin"));
        const io::Blob opt = io::read_blob(dir / "optimizer.bin");
        std::size_t i = 0;
        model_.for_each_parameter([&](const std::string& n, Parameter<S>&) {
            opt.load_into("m." + n, opt_.m[i]);
            opt.load_into("v." + n, opt_.v[i]);
            ++i;
        });
        opt_.step = state.at("step").get<long>();
        rng_.load(state.at("rng").get<std::string>());
    }

private:
    std::pair<Matrix<S>, Matrix<S>> velocity_target_tokens(const PreparedSample<S>& s, const codec::LatentTensor<S>& eps) const {
        const auto& z = s.z_tgt.data;
        Tensor4<S> v(z.dim(0) + 1, z.dim(1), z.dim(2), z.dim(3));
        const std::size_t fs = z.frame_size();
        for (std::size_t i = 0; i < z.size(); ++i) v.data[fs + i] = eps.data.data[i] - z.data[i];
        const int p = model_.config().backbone.patch;
        Matrix<S> target = codec::patch_split(v, p);
        Matrix<S> weights = Matrix<S>::Ones(target.rows(), target.cols());
        const Eigen::Index ref_tokens = static_cast<Eigen::Index>(z.dim(2) / p) * (z.dim(3) / p);
        weights.topRows(ref_tokens).setZero();
        return {std::move(target), std::move(weights)};
    }

    void apply_adamw(double lr) {
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt_.step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt_.step));
        std::size_t i = 0;
        model_.for_each_parameter([&](const std::string&, Parameter<S>& p) {
            auto& m = opt_.m[i];
            auto& v = opt_.v[i];
            m = static_cast<S>(b1) * m + static_cast<S>(1 - b1) * p.grad;
            v = static_cast<S>(b2) * v + static_cast<S>(1 - b2) * p.grad.cwiseProduct(p.grad);
            if (lr != 0.0) {
                auto step = (m.array() / static_cast<S>(c1)) /
                            ((v.array() / static_cast<S>(c2)).sqrt() + static_cast<S>(cfg_.eps));
                p.value.array() -= static_cast<S>(lr) * (step + static_cast<S>(cfg_.weight_decay) * p.value.array());
            }
            ++i;
        });
    }

    EditModel<S> model_;
    TrainConfig cfg_;
    Rng rng_;
    AdamWState<S> opt_;
};

/// Runs `total_steps` steps (resuming from the trainer's current step),
/// appending {step, loss, grad_norm, lr} JSON lines to `metrics_path` and
/// checkpointing into `out_dir`. `on_step` may return false to stop early.
template <class S>
std::vector<StepMetrics> train_loop(Trainer<S>& trainer, const std::vector<PreparedSample<S>>& data,
                                    const std::filesystem::path& out_dir,
                                    const std::function<bool(const StepMetrics&)>& on_step = {},
                                    const json& checkpoint_extra = json::object()) {
    if (data.empty()) throw DataError("empty dataset");
    std::vector<StepMetrics> history;
    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        log.open(out_dir / "metrics.jsonl", std::ios::app);
        if (!log) throw DataError("cannot open metrics log in " + out_dir.string());
    }
    const auto& cfg = trainer.config();
    while (trainer.step() < cfg.total_steps) {
        StepMetrics m = trainer.train_step(trainer.next_batch(data));
        history.push_back(m);
        if (log && (cfg.log_every <= 1 || m.step % cfg.log_every == 0))
            log << json{{"step", m.step}, {"loss", m.loss}, {"grad_norm", m.grad_norm}, {"lr", m.lr}}.dump() << "\n";
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0)
            trainer.save_checkpoint(out_dir / "checkpoint", checkpoint_extra);
        if (on_step && !on_step(m)) break;
    }
    if (log) log.flush();
    if (!out_dir.empty()) trainer.save_checkpoint(out_dir / "checkpoint", checkpoint_extra);
    return history;
}

}  // namespace mive
