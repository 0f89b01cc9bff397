#pragma once

// Small layered stand-in for a unified vision-language encoder. It embeds
// instruction text, an optional reference image and an optional video into
// one token sequence (text first, then visual patches) and exposes every
// block's hidden state and per-head query/key projections.

#include "mive/autograd.hpp"
#include "mive/core.hpp"
#include "mive/io.hpp"
#include "mive/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace mive {

struct TokenIds {
    std::vector<int> ids;
    bool operator==(const TokenIds&) const = default;
};

/// Newline-delimited vocabulary; line number is the id and line 0 is UNK.
class Vocabulary {
public:
    static constexpr int unk_id = 0;

    Vocabulary() : words_{"<unk>"} {}

    static Vocabulary from_words(std::vector<std::string> words) {
        Vocabulary v;
        v.words_ = std::move(words);
        if (v.words_.empty()) v.words_.push_back("<unk>");
        v.index_.clear();
        for (std::size_t i = 1; i < v.words_.size(); ++i) v.index_.emplace(v.words_[i], static_cast<int>(i));
        return v;
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open vocabulary " + path);
        std::vector<std::string> words;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            words.push_back(line);
        }
        if (words.empty()) throw DataError("empty vocabulary " + path);
        return from_words(std::move(words));
    }

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

    int id(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? unk_id : it->second;
    }

    TokenIds tokenize(const std::string& text) const {
        TokenIds out;
        std::istringstream is(text);
        std::string w;
        while (is >> w) {
            std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
            out.ids.push_back(id(w));
        }
        return out;
    }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

struct EncoderConfig {
    int layers = 4;
    int width = 128;
    int heads = 4;
    int patch = 8;
    int mlp_ratio = 4;
    int vocab_size = 64;
    std::uint64_t seed = 1234;
    double init_std = 0.02;
};

/// Joint text + visual token sequence, C = [E; B].
template <class S>
struct UnifiedContext {
    Matrix<S> embeddings;  // S x d
    int text_count = 0;    // N
    int visual_count = 0;  // M
    // Spatio-temporal layout of the visual tokens: reference frame (if any)
    // followed by video frames, each grid_h x grid_w patches in row-major order.
    int grid_frames = 0, grid_h = 0, grid_w = 0;
    bool has_reference = false;

    int sequence_length() const { return text_count + visual_count; }
    std::vector<int> text_indices() const {
        std::vector<int> v(static_cast<std::size_t>(text_count));
        for (int i = 0; i < text_count; ++i) v[i] = i;
        return v;
    }
    std::vector<int> visual_indices() const {
        std::vector<int> v(static_cast<std::size_t>(visual_count));
        for (int i = 0; i < visual_count; ++i) v[i] = text_count + i;
        return v;
    }
};

template <class S>
struct EncoderTrace {
    std::vector<Matrix<S>> hidden;                   // L + 1 entries; hidden[L] is final-normed
    std::vector<std::vector<Matrix<S>>> queries;     // [layer - 1][head], S x d_head, post Norm_q
    std::vector<std::vector<Matrix<S>>> keys;        // [layer - 1][head], S x d_head, post Norm_k

    int layers() const { return static_cast<int>(queries.size()); }
    bool operator==(const EncoderTrace& o) const {
        auto eq = [](const auto& a, const auto& b) {
            if (a.size() != b.size()) return false;
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || a[i] != b[i]) return false;
            return true;
        };
        if (!eq(hidden, o.hidden) || queries.size() != o.queries.size()) return false;
        for (std::size_t l = 0; l < queries.size(); ++l)
            if (!eq(queries[l], o.queries[l]) || !eq(keys[l], o.keys[l])) return false;
        return true;
    }
};

namespace detail {

/// Standard 1D sinusoidal table: row p holds sin/cos pairs of position p.
template <class S>
RowVector<S> sinusoid(double position, int width, double base = 10000.0) {
    RowVector<S> out(width);
    const int half = width / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(base, -static_cast<double>(i) / std::max(1, half));
        out(i) = static_cast<S>(std::sin(position * freq));
        out(half + i) = static_cast<S>(std::cos(position * freq));
    }
    if (width % 2) out(width - 1) = S(0);
    return out;
}

template <class S>
Matrix<S> rms_rows(const Matrix<S>& x, S eps) {
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv =
        ((x.array().square().rowwise().sum() / static_cast<S>(x.cols())) + eps).rsqrt();
    return x.array().colwise() * inv.array();
}

template <class S>
Matrix<S> gelu(const Matrix<S>& x) {
    const S c = static_cast<S>(0.7978845608028654), k = static_cast<S>(0.044715);
    auto a = x.array();
    return (S(0.5) * a * (S(1) + (c * (a + k * a.cube())).tanh())).matrix();
}

}  // namespace detail

template <class S>
class ToyEncoder {
public:
    struct Block {
        Parameter<S> wq, wk, wv, wo, w1, w2;
    };

    explicit ToyEncoder(EncoderConfig cfg) : cfg_(cfg) {
        if (cfg_.width % cfg_.heads != 0) throw ShapeError("encoder width must be divisible by heads");
        const int d = cfg_.width, pd = 3 * cfg_.patch * cfg_.patch;
        token_embedding_ = Parameter<S>(cfg_.vocab_size, d);
        patch_embedding_ = Parameter<S>(pd, d);
        type_embedding_ = Parameter<S>(3, d);
        blocks_.resize(static_cast<std::size_t>(cfg_.layers));
        for (auto& b : blocks_) {
            b.wq = Parameter<S>(d, d);
            b.wk = Parameter<S>(d, d);
            b.wv = Parameter<S>(d, d);
            b.wo = Parameter<S>(d, d);
            b.w1 = Parameter<S>(d, cfg_.mlp_ratio * d);
            b.w2 = Parameter<S>(cfg_.mlp_ratio * d, d);
        }
        Rng rng(cfg_.seed);
        for_each_parameter([&](const std::string&, Parameter<S>& p) { rng.fill_normal(p.value, cfg_.init_std); });
        // Patch embeddings see raw pixels; scale so visual tokens have magnitude comparable to text.
        patch_embedding_.value *= static_cast<S>(1.0 / std::sqrt(static_cast<double>(pd) / 8.0));
    }

    const EncoderConfig& config() const { return cfg_; }

    template <class F>
    void for_each_parameter(F&& f) {
        f("token_embedding", token_embedding_);
        f("patch_embedding", patch_embedding_);
        f("type_embedding", type_embedding_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            auto& b = blocks_[i];
            f(p + "wq", b.wq);
            f(p + "wk", b.wk);
            f(p + "wv", b.wv);
            f(p + "wo", b.wo);
            f(p + "w1", b.w1);
            f(p + "w2", b.w2);
        }
    }

    /// Builds C = [E; B]. Visual tokens: reference patches first, then video
    /// frames in temporal order, each in row-major patch order.
    UnifiedContext<S> embed(const TokenIds& tokens, const Video* ref, const Video* video) const {
        const int p = cfg_.patch, d = cfg_.width;
        int gh = 0, gw = 0, frames = 0;
        auto check = [&](const Video& v, const char* what) {
            if (v.dim(1) != 3) throw ShapeError(std::string(what) + " must have 3 channels");
            if (v.dim(2) % p || v.dim(3) % p)
                throw ShapeError(std::string(what) + " spatial dims " + std::to_string(v.dim(2)) + "x" +
                                 std::to_string(v.dim(3)) + " not divisible by patch " + std::to_string(p));
            if (frames && (v.dim(2) / p != gh || v.dim(3) / p != gw))
                throw ShapeError("reference and video spatial dims differ");
            gh = v.dim(2) / p;
            gw = v.dim(3) / p;
            frames += v.dim(0);
        };
        if (ref) {
            if (ref->dim(0) != 1) throw ShapeError("reference image must have exactly one frame");
            check(*ref, "reference");
        }
        if (video) check(*video, "video");

        UnifiedContext<S> ctx;
        ctx.text_count = static_cast<int>(tokens.ids.size());
        ctx.visual_count = frames * gh * gw;
        ctx.grid_frames = frames;
        ctx.grid_h = gh;
        ctx.grid_w = gw;
        ctx.has_reference = ref != nullptr;
        ctx.embeddings.resize(ctx.sequence_length(), d);
        int row = 0;
        for (int id : tokens.ids) {
            if (id < 0 || id >= cfg_.vocab_size) throw ShapeError("token id out of vocabulary range");
            ctx.embeddings.row(row) = token_embedding_.value.row(id) + type_embedding_.value.row(0);
            ++row;
        }
        RowVector<S> patch(3 * p * p);
        auto add_frames = [&](const Video& v, int type) {
            for (int t = 0; t < v.dim(0); ++t)
                for (int by = 0; by < gh; ++by)
                    for (int bx = 0; bx < gw; ++bx) {
                        int k = 0;
                        for (int c = 0; c < 3; ++c)
                            for (int dy = 0; dy < p; ++dy)
                                for (int dx = 0; dx < p; ++dx)
                                    patch(k++) = static_cast<S>(v(t, c, by * p + dy, bx * p + dx));
                        ctx.embeddings.row(row) = patch * patch_embedding_.value + type_embedding_.value.row(type);
                        ++row;
                    }
        };
        if (ref) add_frames(*ref, 1);
        if (video) add_frames(*video, 2);
        for (int i = 0; i < ctx.sequence_length(); ++i)
            ctx.embeddings.row(i) += detail::sinusoid<S>(i, d) * static_cast<S>(0.1);
        return ctx;
    }

    EncoderTrace<S> run(const Matrix<S>& input) const {
        const int d = cfg_.width, heads = cfg_.heads, dh = d / heads;
        const S eps = static_cast<S>(1e-6);
        const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
        EncoderTrace<S> trace;
        trace.hidden.push_back(input);
        Matrix<S> h = input;
        for (const auto& b : blocks_) {
            Matrix<S> x = detail::rms_rows<S>(h, eps);
            Matrix<S> q = x * b.wq.value, k = x * b.wk.value, v = x * b.wv.value;
            Matrix<S> attn(h.rows(), d);
            std::vector<Matrix<S>> qs, ks;
            for (int hd = 0; hd < heads; ++hd) {
                Matrix<S> qh = detail::rms_rows<S>(Matrix<S>(q.middleCols(hd * dh, dh)), eps);
                Matrix<S> kh = detail::rms_rows<S>(Matrix<S>(k.middleCols(hd * dh, dh)), eps);
                Matrix<S> probs = ops::softmax_rows<S>(Matrix<S>(qh * kh.transpose() * inv_sqrt));
                attn.middleCols(hd * dh, dh) = probs * v.middleCols(hd * dh, dh);
                qs.push_back(std::move(qh));
                ks.push_back(std::move(kh));
            }
            trace.queries.push_back(std::move(qs));
            trace.keys.push_back(std::move(ks));
            h += attn * b.wo.value;
            h += detail::gelu<S>(detail::rms_rows<S>(h, eps) * b.w1.value) * b.w2.value;
            trace.hidden.push_back(h);
        }
        if (!trace.hidden.empty() && cfg_.layers > 0) trace.hidden.back() = detail::rms_rows<S>(h, eps);
        return trace;
    }

    std::pair<UnifiedContext<S>, EncoderTrace<S>> encode_unified(const TokenIds& tokens, const Video* ref,
                                                                 const Video& video) const {
        UnifiedContext<S> ctx = embed(tokens, ref, &video);
        EncoderTrace<S> trace = run(ctx.embeddings);
        return {std::move(ctx), std::move(trace)};
    }

    /// Final-layer features of text alone.
    Matrix<S> encode_text(const TokenIds& tokens) const {
        return run(embed(tokens, nullptr, nullptr).embeddings).hidden.back();
    }

    /// Final-layer features of a single image alone.
    Matrix<S> encode_image(const Video& image) const {
        if (image.dim(0) != 1) throw ShapeError("image must have exactly one frame");
        return run(embed(TokenIds{}, &image, nullptr).embeddings).hidden.back();
    }

    io::Blob to_blob() {
        io::Blob blob;
        for_each_parameter([&](const std::string& n, Parameter<S>& p) { blob.add(n, p.value); });
        blob.metadata = {{"layers", cfg_.layers}, {"width", cfg_.width},        {"heads", cfg_.heads},
                         {"patch", cfg_.patch},   {"vocab_size", cfg_.vocab_size}, {"seed", cfg_.seed}};
        return blob;
    }
    void load_blob(const io::Blob& blob, const std::string& prefix = "") {
        for_each_parameter([&](const std::string& n, Parameter<S>& p) { blob.load_into(prefix + n, p.value); });
    }

private:
    EncoderConfig cfg_;
    Parameter<S> token_embedding_, patch_embedding_, type_embedding_;
    std::vector<Block> blocks_;
};

/// The encoder trio used by the editing model: one unified encoder plus the
/// decoupled text-only and image-only stand-ins.
template <class S>
struct EncoderSuite {
    ToyEncoder<S> unified;
    ToyEncoder<S> text_only;
    ToyEncoder<S> image_only;

    explicit EncoderSuite(EncoderConfig cfg)
        : unified(cfg), text_only(with_seed(cfg, cfg.seed + 101)), image_only(with_seed(cfg, cfg.seed + 202)) {}

private:
    static EncoderConfig with_seed(EncoderConfig c, std::uint64_t s) {
        c.seed = s;
        return c;
    }
};

}  // namespace mive
