#pragma once

// JSON (de)serialization of the configuration structs. Unknown keys are
// ignored; missing keys keep their defaults.

#include "mive/backbone.hpp"
#include "mive/context_adapter.hpp"
#include "mive/toy_encoder.hpp"

#include <json.hpp>

namespace mive {

using json = nlohmann::json;

inline json to_json(const EncoderConfig& c) {
    return {{"layers", c.layers},         {"width", c.width}, {"heads", c.heads},       {"patch", c.patch},
            {"mlp_ratio", c.mlp_ratio},   {"vocab_size", c.vocab_size}, {"seed", c.seed}, {"init_std", c.init_std}};
}

inline void from_json(const json& j, EncoderConfig& c) {
    c.layers = j.value("layers", c.layers);
    c.width = j.value("width", c.width);
    c.heads = j.value("heads", c.heads);
    c.patch = j.value("patch", c.patch);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.seed = j.value("seed", c.seed);
    c.init_std = j.value("init_std", c.init_std);
}

inline json to_json(const ModelConfig& c) {
    const auto& b = c.backbone;
    return {{"adapter", {{"vlm_width", c.adapter.vlm_width}, {"width", c.adapter.width}, {"eps", c.adapter.eps},
                         {"first_layers", c.adapter.first_layers}}},
            {"backbone", {{"width", b.width},
                          {"depth", b.depth},
                          {"heads", b.heads},
                          {"mlp_ratio", b.mlp_ratio},
                          {"patch", b.patch},
                          {"latent_channels", b.latent_channels},
                          {"freq_dim", b.freq_dim},
                          {"arch", to_string(b.arch)},
                          {"prediction_target", to_string(b.target)},
                          {"x0_min_t", b.x0_min_t},
                          {"cond_position_offset", b.cond_position_offset},
                          {"norm_eps", b.norm_eps}}},
            {"layer_mode", to_string(c.layer_mode)},
            {"seed", c.seed}};
}

inline void from_json(const json& j, ModelConfig& c) {
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        c.adapter.vlm_width = a.value("vlm_width", c.adapter.vlm_width);
        c.adapter.width = a.value("width", c.adapter.width);
        c.adapter.eps = a.value("eps", c.adapter.eps);
        c.adapter.first_layers = a.value("first_layers", c.adapter.first_layers);
    }
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        auto& o = c.backbone;
        o.width = b.value("width", o.width);
        o.depth = b.value("depth", o.depth);
        o.heads = b.value("heads", o.heads);
        o.mlp_ratio = b.value("mlp_ratio", o.mlp_ratio);
        o.patch = b.value("patch", o.patch);
        o.latent_channels = b.value("latent_channels", o.latent_channels);
        o.freq_dim = b.value("freq_dim", o.freq_dim);
        if (b.contains("arch")) o.arch = parse_arch(b["arch"].get<std::string>());
        if (b.contains("prediction_target")) o.target = parse_prediction_target(b["prediction_target"].get<std::string>());
        o.x0_min_t = b.value("x0_min_t", o.x0_min_t);
        o.cond_position_offset = b.value("cond_position_offset", o.cond_position_offset);
        o.norm_eps = b.value("norm_eps", o.norm_eps);
    }
    if (j.contains("layer_mode")) c.layer_mode = parse_layer_mode(j["layer_mode"].get<std::string>());
    c.seed = j.value("seed", c.seed);
}

}  // namespace mive
