// mive: data generation, filtering, training, editing, diagnostics,
// evaluation and ablation from one entry point.
//
// Exit codes: 0 ok, 2 usage, 3 data, 4 numeric, 5 network. Failures print a
// JSON object {"error", "message", "exit_code"} on stderr.

#include "mive/diagnostics.hpp"
#include "mive/pipeline.hpp"
#include "mive/remote_judge.hpp"
#include "mive/ssim.hpp"
#include "mive/stats.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace mive;

namespace {

using Real = float;

// ---------------------------------------------------------------------------
// Config file support: a JSON object with one section per subcommand. Values
// fill options that were not given on the command line.

struct ConfigFile {
    json root = json::object();

    json section(const std::string& name) const {
        return root.contains(name) && root[name].is_object() ? root[name] : json::object();
    }
};

template <class T>
void fill(const CLI::App& app, const json& section, const std::string& key, T& target) {
    if (app.count("--" + key) > 0 || !section.contains(key)) return;
    try {
        target = section[key].get<T>();
    } catch (const json::exception& e) {
        throw UsageError("config key '" + key + "': " + e.what());
    }
}

template <class T>
void fill(const CLI::App& app, const json& section, const std::string& key, std::optional<T>& target) {
    T v{};
    if (app.count("--" + key) > 0 || !section.contains(key)) return;
    fill(app, section, key, v);
    target = v;
}

ConfigFile load_config(const std::string& path) {
    ConfigFile c;
    if (!path.empty()) c.root = io::read_json(path);
    return c;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void require_seed(bool has_seed, const char* cmd) {
    if (!has_seed) throw UsageError(std::string(cmd) + " requires --seed");
}

Workbench<Real> make_workbench(const EncoderConfig& ec, const std::string& vocab_path) {
    return Workbench<Real>(ec, Vocabulary::load(vocab_path.empty() ? default_vocab_path().string() : vocab_path));
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------------------

struct GenArgs {
    int count = 8;
    std::string types = "delete,add,background_swap,recolor";
    std::uint64_t seed = 0;
    std::string out;
    std::string split = "train";
};

void run_gen_data(const GenArgs& a) {
    std::vector<datagen::EditType> types;
    for (const auto& t : split_list(a.types)) types.push_back(datagen::parse_edit_type(t));
    if (a.count < 0) throw UsageError("--count must be non-negative");
    const fs::path root = (a.out.empty() ? default_data_root() : fs::path(a.out)) / a.split;
    const auto samples = toy_corpus(a.count, a.seed, types);
    json ids = json::array();
    for (const auto& s : samples) {
        datagen::write_sample(root, s);
        ids.push_back(s.id);
    }
    print_json({{"written", samples.size()}, {"dir", root.string()}, {"ids", ids}});
}

struct FilterArgs {
    std::string dataset;
    std::string scores;  // optional JSON {id: score}
    int cap = 4000;
    std::string report;
};

void run_filter(const FilterArgs& a) {
    const auto samples = load_dataset(a.dataset);
    json given = json::object();
    if (!a.scores.empty()) given = io::read_json(a.scores);
    std::vector<const datagen::EditSample*> retained;
    json decisions = json::array();
    for (const auto& s : samples) {
        double score;
        if (given.contains(s.id)) {
            score = given[s.id].get<double>();
        } else {
            // Oracle judge on the target itself, i.e. the pair's own quality.
            score = eval::oracle_scores(s, s.tgt).mean();
        }
        const auto d = datagen::filter_decision(score);
        decisions.push_back({{"id", s.id}, {"score", d.score}, {"verdict", datagen::to_string(d.verdict)}, {"reason", d.reason}});
        if (d.verdict == datagen::Verdict::retain) retained.push_back(&s);
    }
    const auto capped = datagen::cap_per_category(retained, a.cap, [](const datagen::EditSample* s) { return s->type; });
    json kept = json::array();
    for (const auto* s : capped) kept.push_back(s->id);
    json report{{"decisions", decisions}, {"retained", kept}, {"cap", a.cap}};
    if (!a.report.empty()) io::write_json(a.report, report);
    print_json(report);
}

struct TrainArgs {
    std::string dataset;
    std::string out = "runs/train";
    std::string vocab;
    std::string resume;
    std::optional<std::uint64_t> seed;
    int limit = 0;
    int steps = 2000;
    int batch_size = 2;
    double lr = 1e-3;
    int warmup = 20;
    double grad_clip = 1.0;
    double weight_decay = 0.0;
    int checkpoint_every = 0;
    std::string arch = "unified_self_attn";
    std::string layer_mode = "first_last";
    std::string prediction_target = "x0";
    double stop_ratio = 0.0;
};

void run_train(const TrainArgs& a, const ConfigFile& cfg) {
    require_seed(a.seed.has_value(), "train");
    if (a.dataset.empty()) throw UsageError("train requires --dataset");
    ModelConfig mc;
    from_json(cfg.section("model"), mc);
    mc.backbone.arch = parse_arch(a.arch);
    mc.layer_mode = parse_layer_mode(a.layer_mode);
    mc.backbone.target = parse_prediction_target(a.prediction_target);
    mc.seed = *a.seed;
    EncoderConfig ec;
    from_json(cfg.section("encoder"), ec);
    TrainConfig tc;
    tc.seed = *a.seed;
    tc.total_steps = a.steps;
    tc.batch_size = a.batch_size;
    tc.lr = a.lr;
    tc.warmup_steps = a.warmup;
    tc.grad_clip = a.grad_clip;
    tc.weight_decay = a.weight_decay;
    tc.checkpoint_every = a.checkpoint_every;

    const auto wb = make_workbench(ec, a.vocab);
    const auto samples = load_dataset(a.dataset, a.limit);
    const auto prepared = wb.prepare_all(samples, mc.adapter);
    Trainer<Real> trainer(EditModel<Real>(mc), tc);
    if (!a.resume.empty()) trainer.load_checkpoint(a.resume);

    LossTracker tracker;
    bool stopped = false;
    const auto hist = train_loop<Real>(
        trainer, prepared, a.out,
        [&](const StepMetrics& m) {
            tracker.push(m.loss);
            if (m.step % 50 == 0)
                std::cerr << "step " << m.step << " loss " << m.loss << " grad_norm " << m.grad_norm << " lr " << m.lr << "\n";
            if (a.stop_ratio > 0 && static_cast<int>(tracker.losses.size()) >= 2 * tracker.window &&
                tracker.ratio() <= a.stop_ratio) {
                stopped = true;
                return false;
            }
            return true;
        },
        {{"encoder", to_json(ec)}});
    json summary{{"steps", trainer.step()}, {"checkpoint", (fs::path(a.out) / "checkpoint").string()}, {"early_stop", stopped}};
    if (tracker.ready()) {
        summary["loss_start"] = tracker.baseline();
        summary["loss_end"] = tracker.trailing();
        summary["ratio"] = tracker.ratio();
    }
    print_json(summary);
}

struct LoadedModel {
    EncoderConfig encoder;
    ModelConfig model;
    std::unique_ptr<EditModel<Real>> net;
};

LoadedModel load_model(const std::string& ckpt) {
    const fs::path dir = fs::is_directory(fs::path(ckpt) / "checkpoint") ? fs::path(ckpt) / "checkpoint" : fs::path(ckpt);
    const json state = io::read_json(dir / "state.json");
    LoadedModel m;
    if (state.contains("encoder")) from_json(state["encoder"], m.encoder);
    from_json(state.at("model"), m.model);
    m.net = std::make_unique<EditModel<Real>>(m.model);
    m.net->load_blob(io::read_blob(dir / "weights.bin"));
    return m;
}

struct EditArgs {
    std::string src, ref, text, ckpt, out, vocab;
    int steps = 20;
    std::optional<std::uint64_t> seed;
};

void run_edit(const EditArgs& a) {
    require_seed(a.seed.has_value(), "edit");
    if (a.src.empty() || a.ref.empty() || a.ckpt.empty() || a.out.empty())
        throw UsageError("edit requires --src, --ref, --ckpt and --out");
    auto lm = load_model(a.ckpt);
    const auto wb = make_workbench(lm.encoder, a.vocab);
    const Video src = io::read_video(a.src);
    const Video ref = io::read_image(a.ref);
    Editor<Real> editor(wb.encoders, wb.vocab, *lm.net);
    const Video out = editor.edit(src, ref, a.text, a.steps, *a.seed);
    io::write_video(a.out, out);
    print_json({{"out", a.out}, {"frames", out.dim(0)}, {"steps", a.steps}, {"seed", *a.seed}});
}

struct DiagnoseArgs {
    std::string video, ref, text, mask, out_dir = "diagnostics", vocab, layers;
};

void run_diagnose(const DiagnoseArgs& a, const ConfigFile& cfg) {
    if (a.video.empty()) throw UsageError("diagnose requires --video");
    EncoderConfig ec;
    from_json(cfg.section("encoder"), ec);
    const auto wb = make_workbench(ec, a.vocab);
    const Video video = io::read_video(a.video);
    std::optional<Video> ref;
    if (!a.ref.empty()) ref = io::read_image(a.ref);
    const TokenIds tokens = wb.vocab.tokenize(a.text);
    auto [ctx, trace] = wb.encoders.unified.encode_unified(tokens, ref ? &*ref : nullptr, video);
    const int layers = trace.layers();
    const diagnostics::TokenGrid grid{ctx.grid_frames, ctx.grid_h, ctx.grid_w};

    std::optional<diagnostics::TokenMask> token_mask;
    if (!a.mask.empty()) {
        Mask3 pm = io::read_mask(a.mask);
        if (ref) {
            // The reference shows the edited first frame: reuse frame 0's mask for it.
            Mask3 with_ref(pm.frames + 1, pm.height, pm.width);
            for (int t = 0; t < with_ref.frames; ++t)
                for (int y = 0; y < pm.height; ++y)
                    for (int x = 0; x < pm.width; ++x) with_ref.set(t, y, x, pm(std::max(0, t - 1), y, x));
            pm = with_ref;
        }
        token_mask = diagnostics::downsample_mask(pm, ec.patch);
    }

    std::vector<std::pair<std::string, int>> columns;
    if (a.layers.empty()) {
        const std::vector<std::pair<std::string, double>> depths{{"0", 0.0},      {"1/6", 1.0 / 6}, {"1/3", 1.0 / 3},
                                                                  {"1/2", 0.5},   {"2/3", 2.0 / 3}, {"5/6", 5.0 / 6},
                                                                  {"1.0", 1.0}};
        for (const auto& [name, d] : depths) columns.emplace_back(name, diagnostics::layer_for_depth(d, layers));
    } else {
        for (const auto& l : split_list(a.layers)) columns.emplace_back("layer " + l, std::stoi(l));
    }

    json table = json::array();
    for (const auto& [name, layer] : columns) {
        const auto attn = diagnostics::cross_modal_attention(trace, ctx, layer);
        json row{{"depth", name}, {"layer", layer}};
        if (token_mask) row["R_mask"] = static_cast<double>(diagnostics::attention_mask_ratio(attn, *token_mask));
        if (ctx.text_count > 0) {
            diagnostics::write_heatmap(a.out_dir, "layer" + std::to_string(layer), diagnostics::mean_text_heatmap(attn, grid));
            row["heatmap"] = "layer" + std::to_string(layer);
        }
        table.push_back(row);
    }
    json report{{"layers", layers}, {"text_tokens", ctx.text_count}, {"visual_tokens", ctx.visual_count}, {"table", table}};
    fs::create_directories(a.out_dir);
    io::write_json(fs::path(a.out_dir) / "report.json", report);
    print_json(report);
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
    std::string dataset, outputs, judge = "oracle", endpoint, report, human_ratings;
    int frames = 40;
};

/// Method name -> sample id -> output directory. `outputs` either holds
/// sample directories directly (one method) or one directory per method.
std::map<std::string, std::map<std::string, fs::path>> discover_outputs(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("outputs directory " + root.string() + " not found");
    std::map<std::string, std::map<std::string, fs::path>> out;
    auto scan = [](const fs::path& dir) {
        std::map<std::string, fs::path> m;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "meta.json")) m[e.path().filename().string()] = e.path();
        return m;
    };
    auto direct = scan(root);
    if (!direct.empty()) {
        out[root.filename().string()] = direct;
        return out;
    }
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) {
            auto m = scan(e.path());
            if (!m.empty()) out[e.path().filename().string()] = m;
        }
    if (out.empty()) throw DataError("no output videos found under " + root.string());
    return out;
}

json human_rating_stats(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open ratings " + csv_path);
    std::map<std::string, std::map<std::string, double>> by_rater;
    std::vector<std::string> items;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_list(line);
        if (f.size() != 3) throw DataError("ratings line " + std::to_string(lineno) + ": expected rater,item,score");
        if (lineno == 1 && f[0] == "rater") continue;
        double v;
        try {
            v = std::stod(f[2]);
        } catch (...) {
            throw DataError("ratings line " + std::to_string(lineno) + ": bad score '" + f[2] + "'");
        }
        by_rater[f[0]][f[1]] = v;
        if (std::find(items.begin(), items.end(), f[1]) == items.end()) items.push_back(f[1]);
    }
    stats::RatingTable table;
    for (const auto& [r, m] : by_rater) {
        std::vector<std::optional<double>> row;
        for (const auto& it : items) row.push_back(m.count(it) ? std::optional<double>(m.at(it)) : std::nullopt);
        table.push_back(row);
    }
    return {{"raters", by_rater.size()}, {"items", items.size()}, {"krippendorff_alpha_ordinal", stats::krippendorff_alpha_ordinal(table)}};
}

void run_evaluate(const EvalArgs& a) {
    if (a.dataset.empty() || a.outputs.empty()) throw UsageError("evaluate requires --dataset and --outputs");
    if (a.judge != "oracle" && a.judge != "remote") throw UsageError("--judge must be oracle or remote");
    if (a.judge == "remote" && a.endpoint.empty()) throw UsageError("--judge remote requires --endpoint");
    const auto samples = load_dataset(a.dataset);
    const auto methods = discover_outputs(a.outputs);

    json per_method = json::object();
    json table = json::array();
    std::map<std::string, std::map<std::string, double>> sample_means;
    for (const auto& [method, outputs] : methods) {
        std::vector<EvaluationRow> rows;
        for (const auto& s : samples) {
            auto it = outputs.find(s.id);
            if (it == outputs.end()) continue;
            const Video out = io::read_video(it->second);
            eval::EvalScores sc;
            if (a.judge == "oracle") {
                sc = eval::oracle_scores(s, out);
            } else {
                eval::JudgeOptions opt;
                opt.frames = a.frames;
                sc = eval::remote_judge(a.endpoint, s, out, opt);
            }
            sc = eval::apply_negligible_cap(sc, s.src, out);
            rows.push_back({s.id, datagen::to_string(s.type), sc, out.same_shape(s.tgt) ? eval::detail::mae(out, s.tgt) : 0.0});
            sample_means[method][s.id] = sc.mean();
        }
        if (rows.empty()) throw DataError("method " + method + " has no outputs matching the dataset");
        const auto summary = summarize(std::move(rows));
        per_method[method] = to_json(summary);
        json row{{"variant", method}, {"ok", true}, {"mean", summary.mean.mean()}};
        for (int d = 0; d < eval::dim_count; ++d) row[eval::dim_names[d]] = summary.mean.value[d];
        table.push_back(row);
    }

    json stats_block = json::object();
    json pairs = json::array();
    for (auto i = sample_means.begin(); i != sample_means.end(); ++i)
        for (auto j = std::next(i); j != sample_means.end(); ++j) {
            std::vector<double> x, y;
            for (const auto& [id, v] : i->second)
                if (j->second.count(id)) x.push_back(v), y.push_back(j->second.at(id));
            if (x.empty()) continue;
            const auto w = stats::wilcoxon_signed_rank(x, y);
            json entry{{"a", i->first}, {"b", j->first}, {"n", w.n}, {"degenerate", w.degenerate}};
            if (!w.degenerate) entry.update({{"statistic", w.statistic}, {"p_two_sided", w.p_two_sided}, {"exact", w.exact}});
            pairs.push_back(entry);
        }
    stats_block["wilcoxon"] = pairs;
    if (!a.human_ratings.empty()) stats_block["human_ratings"] = human_rating_stats(a.human_ratings);

    json report{{"judge", a.judge}, {"methods", per_method}, {"table", table}, {"table_markdown", markdown_table(table)},
                {"stats", stats_block}};
    if (!a.report.empty()) io::write_json(a.report, report);
    print_json(report);
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string dataset, out = "runs/ablation", vocab;
    std::optional<std::uint64_t> seed;
    int steps = 200;
    int batch_size = 2;
    double lr = 1e-3;
    int warmup = 20;
    int edit_steps = 10;
    int limit = 8;
};

void run_ablate(const AblateArgs& a, const ConfigFile& cfg) {
    const std::uint64_t seed = a.seed.value_or(0);
    EncoderConfig ec;
    from_json(cfg.section("encoder"), ec);
    const auto wb = make_workbench(ec, a.vocab);
    const auto samples = a.dataset.empty() ? toy_corpus(a.limit, seed) : load_dataset(a.dataset, a.limit);
    AblationSettings s;
    from_json(cfg.section("model"), s.model);
    s.model.seed = seed;
    s.train.seed = seed;
    s.train.total_steps = a.steps;
    s.train.batch_size = a.batch_size;
    s.train.lr = a.lr;
    s.train.warmup_steps = a.warmup;
    s.edit_steps = a.edit_steps;
    s.edit_seed = seed;
    const auto results = run_ablation(wb, samples, s);
    json report = ablation_report(results);
    report["settings"] = {{"steps", a.steps}, {"batch_size", a.batch_size}, {"lr", a.lr}, {"samples", samples.size()}, {"seed", seed}};
    fs::create_directories(a.out);
    io::write_json(fs::path(a.out) / "ablation.json", report);
    std::ofstream(fs::path(a.out) / "ablation.md") << ablation_markdown(report);
    std::cout << ablation_markdown(report);
}

void run_report(const std::string& input) {
    const json j = io::read_json(input);
    if (j.contains("architectures")) {
        std::cout << ablation_markdown(j);
    } else if (j.contains("table")) {
        std::cout << markdown_table(j["table"]);
    } else {
        throw DataError(input + " is neither an ablation nor an evaluation report");
    }
}

int exit_code(ErrorKind k) { return static_cast<int>(k); }

const char* kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::data: return "data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::network: return "network";
    }
    return "error";
}

int fail(const char* kind, const std::string& message, int code, const json& extra = json::object()) {
    json e{{"error", kind}, {"message", message}, {"exit_code", code}};
    e.update(extra);
    std::cerr << e.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-guided video editing toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config with one section per subcommand");

    GenArgs gen;
    std::optional<std::uint64_t> gen_seed;
    auto* c_gen = app.add_subcommand("gen-data", "Generate synthetic editing pairs");
    c_gen->add_option("--count", gen.count, "Number of samples");
    c_gen->add_option("--types", gen.types, "Comma-separated edit types");
    c_gen->add_option("--seed", gen_seed, "Base seed (sample i uses seed + i)");
    c_gen->add_option("--out", gen.out, "Dataset root (default $MIVE_DATA_DIR)");
    c_gen->add_option("--split", gen.split, "Split name");

    FilterArgs flt;
    auto* c_filter = app.add_subcommand("filter", "Apply the retention thresholds and per-category cap");
    c_filter->add_option("--dataset", flt.dataset, "Dataset split directory")->required();
    c_filter->add_option("--scores", flt.scores, "JSON {sample_id: score}; oracle judge otherwise");
    c_filter->add_option("--cap", flt.cap, "Per-category cap");
    c_filter->add_option("--report", flt.report, "Write the decisions here");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Flow-matching training");
    c_train->add_option("--dataset", tr.dataset, "Dataset split directory");
    c_train->add_option("--out", tr.out, "Run directory (metrics.jsonl, checkpoint/)");
    c_train->add_option("--vocab", tr.vocab, "Vocabulary file");
    c_train->add_option("--resume", tr.resume, "Checkpoint directory to resume from");
    c_train->add_option("--seed", tr.seed, "Seed");
    c_train->add_option("--limit", tr.limit, "Use at most this many samples");
    c_train->add_option("--steps", tr.steps, "Total optimizer steps");
    c_train->add_option("--batch-size", tr.batch_size, "Samples per step");
    c_train->add_option("--lr", tr.lr, "Peak learning rate");
    c_train->add_option("--warmup", tr.warmup, "Linear warmup steps");
    c_train->add_option("--grad-clip", tr.grad_clip, "Global gradient-norm clip");
    c_train->add_option("--weight-decay", tr.weight_decay, "AdamW weight decay");
    c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint period in steps (0: end only)");
    c_train->add_option("--arch", tr.arch, "unified_self_attn | unified_fused_xattn | unified_dual_xattn | decoupled_dual_xattn");
    c_train->add_option("--layer-mode", tr.layer_mode, "first_last | first_only | last_only");
    c_train->add_option("--prediction-target", tr.prediction_target, "x0 | velocity");
    c_train->add_option("--stop-ratio", tr.stop_ratio, "Stop once trailing/initial loss falls to this ratio");

    EditArgs ed;
    auto* c_edit = app.add_subcommand("edit", "Edit a video with a trained checkpoint");
    c_edit->add_option("--src", ed.src, "Source video directory");
    c_edit->add_option("--ref", ed.ref, "Reference image PNG");
    c_edit->add_option("--text", ed.text, "Instruction");
    c_edit->add_option("--ckpt", ed.ckpt, "Checkpoint directory");
    c_edit->add_option("--steps", ed.steps, "Euler steps");
    c_edit->add_option("--seed", ed.seed, "Noise seed");
    c_edit->add_option("--out", ed.out, "Output video directory");
    c_edit->add_option("--vocab", ed.vocab, "Vocabulary file");

    DiagnoseArgs dg;
    auto* c_diag = app.add_subcommand("diagnose", "Cross-modal attention diagnostics");
    c_diag->add_option("--video", dg.video, "Video directory");
    c_diag->add_option("--ref", dg.ref, "Optional reference image");
    c_diag->add_option("--text", dg.text, "Instruction");
    c_diag->add_option("--layers", dg.layers, "Comma-separated layer indices (default: relative-depth columns)");
    c_diag->add_option("--mask", dg.mask, "Pixel mask directory");
    c_diag->add_option("--out-dir", dg.out_dir, "Output directory");
    c_diag->add_option("--vocab", dg.vocab, "Vocabulary file");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "Score edited outputs");
    c_eval->add_option("--dataset", ev.dataset, "Dataset split directory");
    c_eval->add_option("--outputs", ev.outputs, "Outputs: <method>/<sample_id>/ or <sample_id>/");
    c_eval->add_option("--judge", ev.judge, "oracle | remote");
    c_eval->add_option("--endpoint", ev.endpoint, "Remote judge URL");
    c_eval->add_option("--frames", ev.frames, "Frames sampled for the remote judge");
    c_eval->add_option("--report", ev.report, "Write the report JSON here");
    c_eval->add_option("--human-ratings", ev.human_ratings, "CSV rater,item,score for Krippendorff's alpha");

    AblateArgs ab;
    auto* c_ablate = app.add_subcommand("ablate", "Architecture x layer-selection ablation grid");
    c_ablate->add_option("--dataset", ab.dataset, "Dataset split directory (default: generated toy corpus)");
    c_ablate->add_option("--out", ab.out, "Output directory");
    c_ablate->add_option("--seed", ab.seed, "Seed shared by every cell");
    c_ablate->add_option("--steps", ab.steps, "Training steps per cell");
    c_ablate->add_option("--batch-size", ab.batch_size, "Samples per step");
    c_ablate->add_option("--lr", ab.lr, "Peak learning rate");
    c_ablate->add_option("--warmup", ab.warmup, "Warmup steps");
    c_ablate->add_option("--edit-steps", ab.edit_steps, "Euler steps at evaluation");
    c_ablate->add_option("--limit", ab.limit, "Samples per cell");
    c_ablate->add_option("--vocab", ab.vocab, "Vocabulary file");

    std::string report_in;
    auto* c_report = app.add_subcommand("report", "Render a report JSON as markdown");
    c_report->add_option("input", report_in, "ablation.json or evaluation report")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        const ConfigFile cfg = load_config(config_path);
        if (*c_gen) {
            const json s = cfg.section("gen-data");
            fill(*c_gen, s, "count", gen.count);
            fill(*c_gen, s, "types", gen.types);
            fill(*c_gen, s, "out", gen.out);
            fill(*c_gen, s, "split", gen.split);
            fill(*c_gen, s, "seed", gen_seed);
            require_seed(gen_seed.has_value(), "gen-data");
            gen.seed = *gen_seed;
            run_gen_data(gen);
        } else if (*c_filter) {
            const json s = cfg.section("filter");
            fill(*c_filter, s, "scores", flt.scores);
            fill(*c_filter, s, "cap", flt.cap);
            fill(*c_filter, s, "report", flt.report);
            run_filter(flt);
        } else if (*c_train) {
            const json s = cfg.section("train");
            fill(*c_train, s, "dataset", tr.dataset);
            fill(*c_train, s, "out", tr.out);
            fill(*c_train, s, "vocab", tr.vocab);
            fill(*c_train, s, "seed", tr.seed);
            fill(*c_train, s, "limit", tr.limit);
            fill(*c_train, s, "steps", tr.steps);
            fill(*c_train, s, "batch-size", tr.batch_size);
            fill(*c_train, s, "lr", tr.lr);
            fill(*c_train, s, "warmup", tr.warmup);
            fill(*c_train, s, "grad-clip", tr.grad_clip);
            fill(*c_train, s, "weight-decay", tr.weight_decay);
            fill(*c_train, s, "checkpoint-every", tr.checkpoint_every);
            fill(*c_train, s, "arch", tr.arch);
            fill(*c_train, s, "layer-mode", tr.layer_mode);
            fill(*c_train, s, "prediction-target", tr.prediction_target);
            fill(*c_train, s, "stop-ratio", tr.stop_ratio);
            if (tr.dataset.empty()) tr.dataset = (default_data_root() / "train").string();
            run_train(tr, cfg);
        } else if (*c_edit) {
            const json s = cfg.section("edit");
            fill(*c_edit, s, "steps", ed.steps);
            fill(*c_edit, s, "seed", ed.seed);
            fill(*c_edit, s, "ckpt", ed.ckpt);
            fill(*c_edit, s, "vocab", ed.vocab);
            run_edit(ed);
        } else if (*c_diag) {
            const json s = cfg.section("diagnose");
            fill(*c_diag, s, "layers", dg.layers);
            fill(*c_diag, s, "out-dir", dg.out_dir);
            fill(*c_diag, s, "vocab", dg.vocab);
            run_diagnose(dg, cfg);
        } else if (*c_eval) {
            const json s = cfg.section("evaluate");
            fill(*c_eval, s, "judge", ev.judge);
            fill(*c_eval, s, "endpoint", ev.endpoint);
            fill(*c_eval, s, "frames", ev.frames);
            fill(*c_eval, s, "report", ev.report);
            run_evaluate(ev);
        } else if (*c_ablate) {
            const json s = cfg.section("ablate");
            fill(*c_ablate, s, "dataset", ab.dataset);
            fill(*c_ablate, s, "out", ab.out);
            fill(*c_ablate, s, "seed", ab.seed);
            fill(*c_ablate, s, "steps", ab.steps);
            fill(*c_ablate, s, "batch-size", ab.batch_size);
            fill(*c_ablate, s, "lr", ab.lr);
            fill(*c_ablate, s, "warmup", ab.warmup);
            fill(*c_ablate, s, "edit-steps", ab.edit_steps);
            fill(*c_ablate, s, "limit", ab.limit);
            run_ablate(ab, cfg);
        } else if (*c_report) {
            run_report(report_in);
        }
    } catch (const NetworkError& e) {
        return fail("network", e.what(), 5, {{"attempts", e.attempts}});
    } catch (const Error& e) {
        return fail(kind_name(e.kind()), e.what(), exit_code(e.kind()));
    } catch (const json::exception& e) {
        return fail("data", e.what(), 3);
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("data", e.what(), 3);
    } catch (const std::exception& e) {
        return fail("data", e.what(), 3);
    }
    return 0;
}
