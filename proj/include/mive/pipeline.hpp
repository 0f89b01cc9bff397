#pragma once

// End-to-end glue: frozen encoders + vocabulary, dataset loading, training
// runs, model evaluation with the oracle judge and the ablation grid.

#include "mive/config.hpp"
#include "mive/datagen.hpp"
#include "mive/editor.hpp"
#include "mive/evaluator.hpp"
#include "mive/trainer.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mive {

inline std::filesystem::path default_data_root() {
    if (const char* env = std::getenv("MIVE_DATA_DIR"); env && *env) return env;
#ifdef MIVE_DATA_ROOT
    return MIVE_DATA_ROOT;
#else
    return "data";
#endif
}

inline std::filesystem::path default_vocab_path() {
    const auto p = default_data_root() / "vocab.txt";
#ifdef MIVE_DATA_ROOT
    if (!std::filesystem::exists(p)) return std::filesystem::path(MIVE_DATA_ROOT) / "vocab.txt";
#endif
    return p;
}

/// Frozen encoders and vocabulary shared by training, editing and diagnostics.
template <class S>
struct Workbench {
    EncoderConfig encoder_config;
    EncoderSuite<S> encoders;
    Vocabulary vocab;

    Workbench(const EncoderConfig& ec, Vocabulary v) : encoder_config(ec), encoders(ec), vocab(std::move(v)) {
        if (vocab.size() > ec.vocab_size)
            throw DataError("vocabulary has " + std::to_string(vocab.size()) + " entries, encoder supports " +
                            std::to_string(ec.vocab_size));
    }

    PreparedSample<S> prepare(const datagen::EditSample& s, const AdapterConfig& acfg) const {
        return prepare_sample<S>(encoders, vocab, acfg, s.id, s.src, s.tgt, s.ref, s.instruction);
    }

    std::vector<PreparedSample<S>> prepare_all(const std::vector<datagen::EditSample>& samples,
                                               const AdapterConfig& acfg) const {
        std::vector<PreparedSample<S>> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(prepare(s, acfg));
        return out;
    }
};

inline std::vector<datagen::EditSample> load_dataset(const std::filesystem::path& dir, int limit = 0) {
    std::vector<datagen::EditSample> out;
    for (const auto& p : datagen::list_samples(dir)) {
        if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
        out.push_back(datagen::read_sample(p));
    }
    if (out.empty()) throw DataError("dataset " + dir.string() + " is empty");
    return out;
}

/// Deterministic toy corpus of `count` samples cycling through the edit types.
inline std::vector<datagen::EditSample> toy_corpus(int count, std::uint64_t seed,
                                                   const std::vector<datagen::EditType>& types = datagen::all_edit_types()) {
    if (types.empty()) throw UsageError("no edit types requested");
    std::vector<datagen::EditSample> out;
    for (int i = 0; i < count; ++i)
        out.push_back(datagen::generate_sample(types[static_cast<std::size_t>(i) % types.size()], seed + static_cast<std::uint64_t>(i)));
    return out;
}

/// Loss-drop tracking: the reference is the mean of the first `window` step
/// losses; the current value is the trailing mean over `window` steps.
struct LossTracker {
    int window = 10;
    std::vector<double> losses;

    void push(double l) { losses.push_back(l); }
    bool ready() const { return static_cast<int>(losses.size()) >= window; }
    double baseline() const { return mean(0, window); }
    double trailing() const { return mean(static_cast<int>(losses.size()) - window, window); }
    double ratio() const { return trailing() / baseline(); }

private:
    double mean(int from, int n) const {
        double s = 0;
        for (int i = from; i < from + n; ++i) s += losses[static_cast<std::size_t>(i)];
        return s / n;
    }
};

struct EvaluationRow {
    std::string id;
    std::string edit_type;
    eval::EvalScores scores;
    double mae = 0;
};

struct EvaluationSummary {
    std::vector<EvaluationRow> rows;
    eval::EvalScores mean;
    double mae = 0;
};

inline json to_json(const EvaluationSummary& s) {
    json rows = json::array();
    for (const auto& r : s.rows)
        rows.push_back({{"id", r.id}, {"edit_type", r.edit_type}, {"scores", eval::to_json(r.scores)}, {"mae", r.mae}});
    json means = json::object();
    for (int d = 0; d < eval::dim_count; ++d) means[eval::dim_names[d]] = s.mean.value[d];
    return {{"samples", rows}, {"means", means}, {"mean_score", s.mean.mean()}, {"mae", s.mae}};
}

inline EvaluationSummary summarize(std::vector<EvaluationRow> rows) {
    EvaluationSummary s;
    s.rows = std::move(rows);
    for (const auto& r : s.rows) {
        for (int d = 0; d < eval::dim_count; ++d) s.mean.value[d] += r.scores.value[d];
        s.mae += r.mae;
    }
    if (!s.rows.empty()) {
        for (auto& v : s.mean.value) v /= static_cast<double>(s.rows.size());
        s.mae /= static_cast<double>(s.rows.size());
    }
    return s;
}

/// Edits every sample and scores the output with the oracle judge (cap rule applied).
template <class S>
EvaluationSummary evaluate_model(const Workbench<S>& wb, EditModel<S>& model, const std::vector<datagen::EditSample>& samples,
                                 const std::vector<PreparedSample<S>>& prepared, int steps, std::uint64_t seed) {
    Editor<S> editor(wb.encoders, wb.vocab, model);
    std::vector<EvaluationRow> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const Video out = editor.edit_with_features(s.src, s.ref, prepared[i].features, steps, seed + i);
        auto scores = eval::apply_negligible_cap(eval::oracle_scores(s, out), s.src, out);
        rows.push_back({s.id, datagen::to_string(s.type), scores, eval::detail::mae(out, s.tgt)});
    }
    return summarize(std::move(rows));
}

// ---------------------------------------------------------------------------
// Ablation grid: four conditioning architectures with first+last layers, and
// three layer selections with the unified self-attention backbone. The
// (unified_self_attn, first_last) cell is shared by both tables.

struct AblationCell {
    Arch arch;
    LayerMode mode;
};

inline std::vector<AblationCell> ablation_cells() {
    return {{Arch::unified_self_attn, LayerMode::first_last},  {Arch::decoupled_dual_xattn, LayerMode::first_last},
            {Arch::unified_dual_xattn, LayerMode::first_last}, {Arch::unified_fused_xattn, LayerMode::first_last},
            {Arch::unified_self_attn, LayerMode::first_only},  {Arch::unified_self_attn, LayerMode::last_only}};
}

struct AblationSettings {
    ModelConfig model;
    TrainConfig train;
    int edit_steps = 10;
    std::uint64_t edit_seed = 0;
};

struct AblationResult {
    AblationCell cell;
    bool ok = false;
    std::string error;
    double final_loss = 0;
    EvaluationSummary eval;
};

template <class S>
AblationResult run_ablation_cell(const Workbench<S>& wb, const std::vector<datagen::EditSample>& samples,
                                 const AblationSettings& base, const AblationCell& cell) {
    AblationResult r;
    r.cell = cell;
    try {
        ModelConfig mc = base.model;
        mc.backbone.arch = cell.arch;
        mc.layer_mode = cell.mode;
        const auto prepared = wb.prepare_all(samples, mc.adapter);
        Trainer<S> trainer(EditModel<S>(mc), base.train);
        const auto hist = train_loop<S>(trainer, prepared, {});
        r.final_loss = hist.empty() ? 0.0 : hist.back().loss;
        r.eval = evaluate_model(wb, trainer.model(), samples, prepared, base.edit_steps, base.edit_seed);
        r.ok = true;
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

template <class S>
std::vector<AblationResult> run_ablation(const Workbench<S>& wb, const std::vector<datagen::EditSample>& samples,
                                         const AblationSettings& base) {
    std::vector<AblationResult> out;
    for (const auto& cell : ablation_cells()) out.push_back(run_ablation_cell(wb, samples, base, cell));
    return out;
}

inline json ablation_row(const AblationResult& r, const std::string& variant) {
    json row{{"variant", variant}, {"arch", to_string(r.cell.arch)}, {"layer_mode", to_string(r.cell.mode)}, {"ok", r.ok}};
    if (!r.ok) {
        row["error"] = r.error;
        return row;
    }
    for (int d = 0; d < eval::dim_count; ++d) row[eval::dim_names[d]] = r.eval.mean.value[d];
    row["mean"] = r.eval.mean.mean();
    row["final_loss"] = r.final_loss;
    return row;
}

inline const char* arch_label(Arch a) {
    switch (a) {
        case Arch::decoupled_dual_xattn: return "Decoupled Encoder Dual Cross-Attention";
        case Arch::unified_dual_xattn: return "Unified Encoder Dual Cross-Attention";
        case Arch::unified_fused_xattn: return "Unified Encoder Fused Cross-Attention";
        case Arch::unified_self_attn: return "Unified Encoder Self-Attention";
    }
    return "?";
}

inline const char* mode_label(LayerMode m) {
    switch (m) {
        case LayerMode::first_only: return "First Layers Only";
        case LayerMode::last_only: return "Last Layer Only";
        case LayerMode::first_last: return "First + Last";
    }
    return "?";
}

/// {"architectures": [4 rows], "layer_modes": [3 rows]}.
inline json ablation_report(const std::vector<AblationResult>& results) {
    json arch = json::array(), modes = json::array();
    for (const auto& r : results) {
        if (r.cell.mode == LayerMode::first_last) arch.push_back(ablation_row(r, arch_label(r.cell.arch)));
        if (r.cell.arch == Arch::unified_self_attn) modes.push_back(ablation_row(r, mode_label(r.cell.mode)));
    }
    // Order the layer table first_only, last_only, first_last.
    std::stable_sort(modes.begin(), modes.end(), [](const json& a, const json& b) {
        auto rank = [](const json& j) { return static_cast<int>(parse_layer_mode(j["layer_mode"].get<std::string>())); };
        return rank(a) < rank(b);
    });
    return {{"architectures", arch}, {"layer_modes", modes}};
}

inline std::string markdown_table(const json& rows) {
    std::ostringstream os;
    os << "| Variant |";
    for (const char* d : eval::dim_names) os << " " << d << " |";
    os << " Mean |\n|---|";
    for (int d = 0; d <= eval::dim_count; ++d) os << "---|";
    os << "\n";
    char buf[32];
    for (const auto& r : rows) {
        os << "| " << r.value("variant", std::string("?")) << " |";
        if (!r.value("ok", true)) {
            os << " failed: " << r.value("error", std::string()) << " |\n";
            continue;
        }
        for (const char* d : eval::dim_names) {
            std::snprintf(buf, sizeof(buf), " %.2f |", r.at(d).get<double>());
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), " %.2f |", r.at("mean").get<double>());
        os << buf << "\n";
    }
    return os.str();
}

inline std::string ablation_markdown(const json& report) {
    return "### Conditioning architecture\n\n" + markdown_table(report.at("architectures")) +
           "\n### Layer selection\n\n" + markdown_table(report.at("layer_modes"));
}

}  // namespace mive
