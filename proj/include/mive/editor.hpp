#pragma once

// Noise-initialized Euler integration of the learned flow from t = 1 to t = 0,
// conditioned on source video, reference image and instruction.

#include "mive/backbone.hpp"
#include "mive/latent_codec.hpp"
#include "mive/rng.hpp"
#include "mive/toy_encoder.hpp"

#include <functional>
#include <string>

namespace mive {

/// z - dt * v.
template <class S>
Tensor4<S> euler_step(const Tensor4<S>& z, const Tensor4<S>& v, S dt) {
    if (!(dt > S(0))) throw UsageError("euler step size must be positive");
    if (!z.same_shape(v)) throw ShapeError("euler_step: latent and velocity shapes differ");
    Tensor4<S> out = z;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= dt * v.data[i];
    return out;
}

/// Called once per integration step with the joint latent fed to the backbone
/// and the condition streams used for it.
template <class S>
using StepObserver = std::function<void(int step, S t, const codec::JointLatent<S>&, const ConditionStreams<S>&)>;

template <class S>
class Editor {
public:
    Editor(const EncoderSuite<S>& encoders, const Vocabulary& vocab, EditModel<S>& model)
        : enc_(encoders), vocab_(vocab), model_(model) {}

    EncoderFeatures<S> features(const Video& src, const Video& ref, const std::string& instruction) const {
        const TokenIds tokens = vocab_.tokenize(instruction);
        auto [ctx, trace] = enc_.unified.encode_unified(tokens, &ref, src);
        return extract_features(enc_, trace, tokens, ref, model_.config().adapter);
    }

    Video edit(const Video& src, const Video& ref, const std::string& instruction, int steps, std::uint64_t seed,
               const StepObserver<S>& observer = {}) {
        return edit_with_features(src, ref, features(src, ref, instruction), steps, seed, observer);
    }

    Video edit_with_features(const Video& src, const Video& ref, const EncoderFeatures<S>& feats, int steps,
                             std::uint64_t seed, const StepObserver<S>& observer = {}) {
        if (steps < 1) throw UsageError("steps must be >= 1");
        if (ref.dim(0) != 1) throw ShapeError("reference must be a single frame");
        const auto z_src = codec::encode<S>(src);
        const auto z_ref = codec::encode<S>(ref);
        // Condition tokens are stationary: computed once, reused every step.
        const ConditionStreams<S> cond = model_.condition_streams(feats);

        Rng rng(seed);
        codec::LatentTensor<S> z{Tensor4<S>(z_src.data.dim(0), z_src.data.dim(1), z_src.data.dim(2), z_src.data.dim(3)),
                                 false};
        rng.fill_normal(z.data);

        const S dt = S(1) / static_cast<S>(steps);
        const std::size_t fs = z.data.frame_size();
        for (int k = 0; k < steps; ++k) {
            const S t = S(1) - static_cast<S>(k) / static_cast<S>(steps);
            const auto joint = codec::build_joint(z_ref, z, z_src);
            if (observer) observer(k, t, joint, cond);
            const Tensor4<S> v_full = model_.predict_velocity(cond, joint, t);
            // Drop the reference slot; only the edited frames are integrated.
            Tensor4<S> v(z.data.dim(0), z.data.dim(1), z.data.dim(2), z.data.dim(3));
            std::copy(v_full.data.begin() + static_cast<std::ptrdiff_t>(fs), v_full.data.end(), v.data.begin());
            z.data = euler_step(z.data, v, dt);
            if (!z.data.all_finite()) throw NumericError("non-finite latent at edit step " + std::to_string(k));
        }
        return codec::decode(z);
    }

private:
    const EncoderSuite<S>& enc_;
    const Vocabulary& vocab_;
    EditModel<S>& model_;
};

}  // namespace mive
