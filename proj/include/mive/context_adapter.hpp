#pragma once

// Projects selected encoder-layer features into the backbone width and fuses
// them into condition tokens. All linears are bias-free.

#include "mive/autograd.hpp"
#include "mive/rng.hpp"
#include "mive/toy_encoder.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mive {

enum class LayerMode { first_only, last_only, first_last };
enum class Branch { first, last };

inline const char* to_string(LayerMode m) {
    switch (m) {
        case LayerMode::first_only: return "first_only";
        case LayerMode::last_only: return "last_only";
        case LayerMode::first_last: return "first_last";
    }
    return "?";
}

inline LayerMode parse_layer_mode(const std::string& s) {
    if (s == "first_only") return LayerMode::first_only;
    if (s == "last_only") return LayerMode::last_only;
    if (s == "first_last") return LayerMode::first_last;
    throw UsageError("unknown layer mode '" + s + "'");
}

struct AdapterConfig {
    int vlm_width = 128;
    int width = 256;  // D
    double eps = 1e-6;
    // Encoder hidden-state indices averaged into the "first layer" feature.
    // 1 is the output of block 1; 0 selects the embedding output instead.
    std::vector<int> first_layers{1};
};

/// Frozen encoder outputs consumed by the adapter and the backbone variants.
template <class S>
struct EncoderFeatures {
    Matrix<S> first;  // S x d_vlm
    Matrix<S> last;   // S x d_vlm
    Matrix<S> text;   // N x d_vlm, decoupled text-only encoder
    Matrix<S> image;  // M_ref x d_vlm, decoupled image-only encoder
};

template <class S>
EncoderFeatures<S> extract_features(const EncoderSuite<S>& enc, const EncoderTrace<S>& trace, const TokenIds& tokens,
                                    const Video& ref, const AdapterConfig& cfg) {
    EncoderFeatures<S> f;
    const int layers = trace.layers();
    f.first = Matrix<S>::Zero(trace.hidden.front().rows(), trace.hidden.front().cols());
    for (int l : cfg.first_layers) {
        if (l < 0 || l > layers) throw UsageError("first-layer index " + std::to_string(l) + " out of range");
        f.first += trace.hidden[static_cast<std::size_t>(l)];
    }
    f.first /= static_cast<S>(cfg.first_layers.size());
    f.last = trace.hidden.back();
    f.text = enc.text_only.encode_text(tokens);
    f.image = enc.image_only.encode_image(ref);
    return f;
}

template <class S>
class ContextAdapter {
public:
    ContextAdapter() = default;
    ContextAdapter(const AdapterConfig& cfg, Rng& rng) : cfg_(cfg) {
        if (cfg_.width % 2) throw ShapeError("adapter width must be even");
        const int d = cfg_.vlm_width, w = cfg_.width;
        proj_first_ = Parameter<S>(d, w / 2);
        proj_last_ = Parameter<S>(d, w / 2);
        single_first_ = Parameter<S>(d, w);
        single_last_ = Parameter<S>(d, w);
        fuse_ = Parameter<S>(w, w);
        text_proj_ = Parameter<S>(d, w);
        image_proj_ = Parameter<S>(d, w);
        for_each_parameter([&](const std::string&, Parameter<S>& p) {
            rng.fill_normal(p.value, 1.0 / std::sqrt(static_cast<double>(p.value.rows())));
        });
    }

    const AdapterConfig& config() const { return cfg_; }

    template <class F>
    void for_each_parameter(F&& f) {
        f("adapter.proj_first", proj_first_);
        f("adapter.proj_last", proj_last_);
        f("adapter.single_first", single_first_);
        f("adapter.single_last", single_last_);
        f("adapter.fuse", fuse_);
        f("adapter.text_proj", text_proj_);
        f("adapter.image_proj", image_proj_);
    }

    Parameter<S>& projection(Branch b) { return b == Branch::first ? proj_first_ : proj_last_; }
    Parameter<S>& fuse_weight() { return fuse_; }

    /// RMSNorm then the branch's linear map to D/2.
    Var<S> project_layer(Tape<S>& t, Var<S> phi, Branch branch) {
        check_input(phi);
        return ops::linear(t, ops::rms_norm(phi, static_cast<S>(cfg_.eps)), projection(branch));
    }

    /// Feature-dim concat (first half, last half) followed by the fusion linear.
    Var<S> fuse(Tape<S>& t, Var<S> first, Var<S> last) {
        if (first.rows() != last.rows() || first.cols() != cfg_.width / 2 || last.cols() != cfg_.width / 2)
            throw ShapeError("fuse expects two S x D/2 inputs");
        return ops::linear(t, ops::concat_cols<S>({first, last}), fuse_);
    }

    Var<S> select_layers(Tape<S>& t, const EncoderFeatures<S>& f, LayerMode mode) {
        const S eps = static_cast<S>(cfg_.eps);
        switch (mode) {
            case LayerMode::first_last:
                return fuse(t, project_layer(t, t.constant(f.first), Branch::first),
                            project_layer(t, t.constant(f.last), Branch::last));
            case LayerMode::first_only: {
                auto x = t.constant(f.first);
                check_input(x);
                return ops::linear(t, ops::linear(t, ops::rms_norm(x, eps), single_first_), fuse_);
            }
            case LayerMode::last_only: {
                auto x = t.constant(f.last);
                check_input(x);
                return ops::linear(t, ops::linear(t, ops::rms_norm(x, eps), single_last_), fuse_);
            }
        }
        throw UsageError("unknown layer mode");
    }

    Var<S> project_text(Tape<S>& t, const Matrix<S>& text) {
        return ops::linear(t, ops::rms_norm(t.constant(text), static_cast<S>(cfg_.eps)), text_proj_);
    }
    Var<S> project_image(Tape<S>& t, const Matrix<S>& image) {
        return ops::linear(t, ops::rms_norm(t.constant(image), static_cast<S>(cfg_.eps)), image_proj_);
    }

private:
    void check_input(const Var<S>& phi) const {
        if (phi.cols() != cfg_.vlm_width) throw ShapeError("adapter input width mismatch");
        if (!phi.value().allFinite()) throw NumericError("non-finite encoder features");
    }

    AdapterConfig cfg_;
    Parameter<S> proj_first_, proj_last_, single_first_, single_last_, fuse_, text_proj_, image_proj_;
};

}  // namespace mive
