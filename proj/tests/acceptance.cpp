// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: mive_acceptance [--only A1,A2,...] [--skip A5]

#include "mive/diagnostics.hpp"
#include "mive/pipeline.hpp"
#include "mive/ssim.hpp"
#include "mive/stats.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace mive;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

Video random_video(Rng& rng, int t, int h, int w) {
    Video v(t, 3, h, w);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform());
    return v;
}

// ---------------------------------------------------------------------------

Outcome a1() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0;
    int cases = 0;
    for (int trial = 0; trial < 60; ++trial) {
        EncoderConfig ec;
        ec.layers = rng.integer(1, 3);
        ec.heads = rng.integer(1, 2);
        ec.width = 4 * ec.heads * rng.integer(1, 2);
        ec.mlp_ratio = 2;
        ec.init_std = 0.5;
        ec.seed = rng.next();
        ToyEncoder<double> enc(ec);
        const int n_text = rng.integer(1, 4);
        const bool with_ref = rng.integer(0, 1) == 1;
        const int frames = rng.integer(1, 12 - n_text - (with_ref ? 1 : 0));
        TokenIds tokens;
        for (int i = 0; i < n_text; ++i) tokens.ids.push_back(rng.integer(0, ec.vocab_size - 1));
        const Video ref = random_video(rng, 1, 8, 8), video = random_video(rng, frames, 8, 8);
        auto [ctx, trace] = enc.encode_unified(tokens, with_ref ? &ref : nullptr, video);
        if (ctx.sequence_length() > 12) return {false, "generated sequence longer than 12"};
        for (int l = 1; l <= ec.layers; ++l) {
            const auto got = diagnostics::cross_modal_attention(trace, ctx, l).values;
            const auto want = oracle::encoder_cross_block(enc, trace, ctx, l);
            worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
            ++cases;
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && secs < 10, fmt("%d layer checks, max abs err %.3g, %.2fs", cases, worst, secs)};
}

Outcome a2() {
    using namespace diagnostics;
    const auto t0 = Clock::now();
    Rng rng(202);
    double uni_err = 0, lo = 1, hi = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = rng.integer(1, 5), m = rng.integer(1, 40);
        CrossModalAttention<double> a;
        a.values = Matrix<double>(n, m);
        for (Eigen::Index i = 0; i < a.values.size(); ++i) a.values.data()[i] = rng.uniform();
        TokenMask mask{{}, {1, 1, m}};
        for (int j = 0; j < m; ++j)
            if (rng.uniform() < 0.4) mask.members.push_back(j);
        const double r = attention_mask_ratio(a, mask);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        CrossModalAttention<double> u;
        u.values = Matrix<double>::Constant(n, m, 1.0 / (n + m));
        uni_err = std::max(uni_err, std::abs(attention_mask_ratio(u, mask) - static_cast<double>(mask.members.size()) / m));
    }
    CrossModalAttention<double> hand;
    hand.values = Matrix<double>(2, 3);
    hand.values << 0.1, 0.2, 0.3, 0.05, 0.15, 0.2;
    const double h = attention_mask_ratio(hand, TokenMask{{0, 2}, {1, 1, 3}});
    const bool ok = uni_err < 1e-9 && lo >= 0 && hi <= 1 && std::abs(h - 0.65) < 1e-12;
    const double secs = seconds_since(t0);
    return {ok && secs < 5, fmt("uniform err %.3g, R range [%.3f, %.3f], hand %.12f, %.2fs", uni_err, lo, hi, h, secs)};
}

Outcome a3() {
    const auto t0 = Clock::now();
    Rng rng(303);
    ModelConfig mc;
    mc.adapter.width = 16;
    mc.backbone.width = 16;
    mc.backbone.depth = 1;
    mc.backbone.heads = 2;
    EditModel<float> model(mc);
    int bad = 0;
    std::string first;
    for (int trial = 0; trial < 200; ++trial) {
        const int t = 4 * rng.integer(0, 5) + 1, h = 16 * rng.integer(1, 4), w = 16 * rng.integer(1, 4);
        const Video v = random_video(rng, t, h, w), ref = random_video(rng, 1, h, w);
        const auto z = codec::encode<float>(v);
        const auto zr = codec::encode<float>(ref);
        const int tl = t / 4 + 1, hl = h / 8, wl = w / 8;
        const auto joint = codec::build_joint(zr, z, z);
        const auto layout = model.layout_for(joint, 0);
        const int nv = (tl + 1) * hl * wl / 4;
        bool ok = z.data.shape == std::array<int, 4>{tl, codec::latent_channels, hl, wl} &&
                  joint.data.shape == std::array<int, 4>{tl + 1, 2 * codec::latent_channels, hl, wl} &&
                  layout.visual_count() == nv && codec::patch_split(joint.data, 2).rows() == nv &&
                  codec::decode(z) == v;
        if (!ok && bad++ == 0) first = fmt("T=%d H=%d W=%d", t, h, w);
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 30, fmt("200 shapes, %d violations%s%s, %.2fs", bad, bad ? " first " : "", first.c_str(), secs)};
}

Outcome a4() {
    const auto t0 = Clock::now();
    const auto r = oracle::gradient_check(Arch::unified_self_attn, 250, 404);
    const double secs = seconds_since(t0);
    return {r.checked >= 200 && r.max_rel_error < 1e-4 && secs < 120,
            fmt("%d parameters, max rel err %.3g, %.2fs", r.checked, r.max_rel_error, secs)};
}

// ---------------------------------------------------------------------------
// A5/A6 share one overfit run.

struct ToyRun {
    bool ran = false;
    Workbench<float>* wb = nullptr;
    std::vector<datagen::EditSample> samples;
    std::unique_ptr<Trainer<float>> trainer;
    std::vector<double> losses;
    long reached_at = -1;
    double best_ratio = 1e9, final_ratio = 0, seconds = 0;
};

constexpr int toy_trailing_window = 50;

ToyRun& toy_run() {
    static Workbench<float> wb(EncoderConfig{}, Vocabulary::load(default_vocab_path().string()));
    static ToyRun run;
    if (run.ran) return run;
    run.ran = true;
    run.wb = &wb;
    run.samples = toy_corpus(8, 100);
    ModelConfig mc;
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.warmup_steps = 20;
    tc.batch_size = 2;
    tc.total_steps = 2000;
    tc.seed = 3;
    const auto prepared = wb.prepare_all(run.samples, mc.adapter);
    run.trainer = std::make_unique<Trainer<float>>(EditModel<float>(mc), tc);
    const auto t0 = Clock::now();
    auto mean = [&](std::size_t from, std::size_t n) {
        double s = 0;
        for (std::size_t i = from; i < from + n; ++i) s += run.losses[i];
        return s / static_cast<double>(n);
    };
    train_loop<float>(*run.trainer, prepared, {}, [&](const StepMetrics& m) {
        run.losses.push_back(m.loss);
        if (run.losses.size() >= static_cast<std::size_t>(toy_trailing_window)) {
            const double r = mean(run.losses.size() - toy_trailing_window, toy_trailing_window) / mean(0, 10);
            run.best_ratio = std::min(run.best_ratio, r);
            run.final_ratio = r;
            if (r <= 0.1 && run.reached_at < 0) run.reached_at = m.step;
        }
        if (m.step % 250 == 0) std::fprintf(stderr, "  [toy] step %ld loss %.4f\n", m.step, m.loss);
        return true;
    });
    run.seconds = seconds_since(t0);
    return run;
}

Outcome a5() {
    const auto& r = toy_run();
    const bool ok = r.reached_at > 0 && r.seconds < 20 * 60;
    return {ok, fmt("trailing-%d mean / first-10 mean: reached <= 0.1 at step %ld, best %.4f, final %.4f; %zu steps in %.0fs",
                    toy_trailing_window, r.reached_at, r.best_ratio, r.final_ratio, r.losses.size(), r.seconds)};
}

Outcome a6() {
    auto& r = toy_run();
    Editor<float> editor(r.wb->encoders, r.wb->vocab, r.trainer->model());
    double mean_mae = 0, first_mae = 0;
    eval::EvalScores first_scores;
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto& s = r.samples[i];
        const Video out = editor.edit(s.src, s.ref, s.instruction, 20, 0);
        const double mae = eval::detail::mae(out, s.tgt);
        mean_mae += mae / static_cast<double>(r.samples.size());
        if (i == 0) {
            first_mae = mae;
            first_scores = eval::oracle_scores(s, out);
        }
    }
    const bool ok = first_mae < 0.05 && first_scores[eval::IA] >= 8.0 && first_scores[eval::CC] >= 8.0;
    return {ok, fmt("pair %s: MAE %.4f, IA %.2f, CC %.2f (mean MAE over all 8 pairs %.4f)", r.samples[0].id.c_str(),
                    first_mae, first_scores[eval::IA], first_scores[eval::CC], mean_mae)};
}

// ---------------------------------------------------------------------------

Outcome a7() {
    ModelConfig mc;
    mc.adapter.width = 32;
    mc.backbone.width = 32;
    mc.backbone.depth = 2;
    mc.backbone.heads = 2;
    EditModel<float> model(mc);
    Rng rng(707);
    model.for_each_parameter([&](const std::string&, Parameter<float>& p) { rng.fill_normal(p.value, 0.05); });
    Workbench<float> wb(EncoderConfig{}, Vocabulary::load(default_vocab_path().string()));
    const auto s = datagen::generate_sample(datagen::EditType::recolor, 7);
    const auto feats = Editor<float>(wb.encoders, wb.vocab, model).features(s.src, s.ref, s.instruction);
    const auto cond = model.condition_streams(feats);
    const auto z = codec::encode<float>(s.src);
    const auto joint = codec::build_joint(codec::encode<float>(s.ref), z, z);
    const auto clean = model.layout_for(joint, static_cast<int>(cond.prefix->rows())).clean_mask();

    std::vector<ForwardProbe<float>> probes;
    for (float t : {0.0f, 0.25f, 0.5f, 0.75f, 1.0f}) {
        ForwardProbe<float> p;
        model.predict_velocity(cond, joint, t, &p);
        probes.push_back(std::move(p));
    }
    long compared = 0, mismatched = 0;
    for (std::size_t b = 0; b < probes[0].modulation.size(); ++b)
        for (std::size_t row = 0; row < clean.size(); ++row) {
            if (!clean[row]) continue;
            for (std::size_t k = 1; k < probes.size(); ++k) {
                ++compared;
                if (probes[k].modulation[b].row(static_cast<Eigen::Index>(row)) != probes[0].modulation[b].row(static_cast<Eigen::Index>(row)))
                    ++mismatched;
            }
        }

    Editor<float> editor(wb.encoders, wb.vocab, model);
    std::optional<Matrix<float>> first;
    int steps = 0, cond_diff = 0;
    editor.edit(s.src, s.ref, s.instruction, 6, 1,
                [&](int, float, const codec::JointLatent<float>&, const ConditionStreams<float>& c) {
                    ++steps;
                    if (!first) first = *c.prefix;
                    else if (*first != *c.prefix) ++cond_diff;
                });
    const bool ok = compared > 0 && mismatched == 0 && steps == 6 && cond_diff == 0;
    return {ok, fmt("%ld clean-row modulation comparisons, %ld mismatches; condition tokens differ at %d of %d steps",
                    compared, mismatched, cond_diff, steps)};
}

Outcome a8() {
    using datagen::Verdict;
    const std::vector<std::pair<double, Verdict>> cases{
        {4.9, Verdict::reject_hard}, {5.0, Verdict::reject_minor}, {8.4, Verdict::reject_minor}, {8.5, Verdict::retain}};
    std::string got;
    bool ok = true;
    for (const auto& [score, want] : cases) {
        const auto v = datagen::filter_decision(score).verdict;
        ok = ok && v == want;
        got += fmt("%.1f->%s ", score, datagen::to_string(v));
    }
    return {ok, got};
}

Outcome a9() {
    bool ok = true;
    double worst = 0;
    for (auto type : datagen::all_edit_types()) {
        const auto s = datagen::generate_sample(type, 9);
        auto raw = eval::oracle_scores(s, s.src);
        raw[eval::CC] = 10.0;
        raw[eval::IA] = 9.0;
        const auto once = eval::apply_negligible_cap(raw, s.src, s.src);
        const auto twice = eval::apply_negligible_cap(once, s.src, s.src);
        for (double v : once.value) worst = std::max(worst, v);
        ok = ok && once == twice;
    }
    ok = ok && worst <= 6.0;
    return {ok, fmt("max dimension after cap %.2f, idempotent %s", worst, ok ? "yes" : "no")};
}

Outcome a10() {
    const auto t0 = Clock::now();
    Rng rng(1010);
    double w_err = 0;
    int w_cases = 0;
    for (int n = 1; n <= 8; ++n)
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                x[static_cast<std::size_t>(i)] = rng.integer(0, 6);
                y[static_cast<std::size_t>(i)] = rng.integer(0, 6);
            }
            const auto r = stats::wilcoxon_signed_rank(x, y);
            const double want = oracle::wilcoxon_enumerated_p(x, y);
            w_err = std::max(w_err, std::abs((r.degenerate ? 1.0 : r.p_two_sided) - want));
            ++w_cases;
        }
    const stats::RatingTable perfect{{1, 3, 5, 2}, {1, 3, 5, 2}, {1, std::nullopt, 5, 2}};
    const double a_perfect = stats::krippendorff_alpha_ordinal(perfect);
    double k_err = 0;
    int tables = 0;
    while (tables < 10) {
        const int raters = rng.integer(2, 4), items = rng.integer(3, 7);
        stats::RatingTable t(static_cast<std::size_t>(raters), std::vector<std::optional<double>>(static_cast<std::size_t>(items)));
        for (auto& row : t)
            for (auto& v : row)
                if (rng.uniform() < 0.9) v = rng.integer(1, 5);
        try {
            k_err = std::max(k_err, std::abs(stats::krippendorff_alpha_ordinal(t) - oracle::krippendorff_pairwise(t)));
            ++tables;
        } catch (const DataError&) {
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = w_err < 1e-12 && a_perfect == 1.0 && k_err < 1e-10 && secs < 60;
    return {ok, fmt("wilcoxon %d vectors max |dp| %.3g; alpha perfect %.1f, 10 tables max err %.3g; %.2fs", w_cases, w_err,
                    a_perfect, k_err, secs)};
}

Outcome a11() {
    const auto t0 = Clock::now();
    Workbench<float> wb(EncoderConfig{}, Vocabulary::load(default_vocab_path().string()));
    const auto samples = toy_corpus(4, 500);
    AblationSettings st;
    st.model.adapter.width = 64;
    st.model.backbone.width = 64;
    st.model.backbone.depth = 2;
    st.model.backbone.heads = 2;
    st.train.lr = 1e-3;
    st.train.warmup_steps = 2;
    st.train.total_steps = 6;
    st.train.batch_size = 2;
    st.train.seed = 11;
    st.edit_steps = 4;
    const auto first = run_ablation(wb, samples, st);
    const auto second = run_ablation(wb, samples, st);
    const json a = ablation_report(first), b = ablation_report(second);
    bool formed = a.at("architectures").size() == 4 && a.at("layer_modes").size() == 3;
    bool all_ok = true, populated = false;
    for (const auto* table : {&a.at("architectures"), &a.at("layer_modes")})
        for (const auto& row : *table) {
            all_ok = all_ok && row.at("ok").get<bool>();
            for (const char* d : eval::dim_names) formed = formed && row.contains(d);
            if (row.at("arch") == "unified_self_attn") populated = populated || row.contains("mean");
        }
    const std::string md = ablation_markdown(a);
    formed = formed && md.find("| Unified Encoder Self-Attention |") != std::string::npos;
    bool identical = false;
    for (std::size_t i = 0; i < first.size(); ++i)
        if (first[i].cell.arch == Arch::unified_self_attn && first[i].cell.mode == LayerMode::first_last) {
            const auto& x = first[i].eval.rows;
            const auto& y = second[i].eval.rows;
            identical = first[i].final_loss == second[i].final_loss && x.size() == y.size();
            for (std::size_t k = 0; identical && k < x.size(); ++k) identical = x[k].scores == y[k].scores && x[k].mae == y[k].mae;
        }
    identical = identical && a.dump() == b.dump();
    const bool ok = formed && all_ok && populated && identical;
    return {ok, fmt("6 cells x2 runs, table well-formed %s, all cells ok %s, self-attn row bitwise identical %s, %.1fs",
                    formed ? "yes" : "no", all_ok ? "yes" : "no", identical ? "yes" : "no", seconds_since(t0))};
}

Outcome a12() {
    Rng rng(1212);
    const Video x = random_video(rng, 2, 24, 24), y = random_video(rng, 2, 24, 24);
    const double self = eval::ssim(x, x);
    const double sym = std::abs(eval::ssim(x, y) - eval::ssim(y, x));
    const float a = 0.3f, b = 0.7f;
    const double c1 = 1e-4, la = a, lb = b;
    const double want = (2 * la * lb + c1) / (la * la + lb * lb + c1);
    const double got = eval::ssim(Video(1, 3, 16, 16, a), Video(1, 3, 16, 16, b));
    const bool ok = self == 1.0 && sym < 1e-12 && std::abs(got - want) < 1e-9;
    return {ok, fmt("ssim(x,x) = %.17g, |ssim(x,y) - ssim(y,x)| = %.3g, constant case err %.3g", self, sym, std::abs(got - want))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string only, skip;
    app.add_option("--only", only, "comma-separated criteria to run");
    app.add_option("--skip", skip, "comma-separated criteria to skip");
    CLI11_PARSE(app, argc, argv);
    auto split = [](const std::string& s) {
        std::set<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) if (!item.empty()) out.insert(item);
        return out;
    };
    const auto only_set = split(only), skip_set = split(skip);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4},   {"A5", a5},   {"A6", a6},
        {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10}, {"A11", a11}, {"A12", a12}};
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if ((!only_set.empty() && !only_set.count(name)) || skip_set.count(name)) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail << std::endl;
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : std::string("acceptance: all passed"))
              << std::endl;
    return failed ? 1 : 0;
}
