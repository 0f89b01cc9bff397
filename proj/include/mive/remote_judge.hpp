#pragma once

// HTTP client for an external VLM judge. The request carries the instruction,
// the optional reference image and uniformly sampled source/output frames as
// base64 PNGs; the response holds one {"<DIM>_score", "reasoning"} object per
// dimension, either as an array or keyed by dimension name.

#include "mive/evaluator.hpp"
#include "mive/io.hpp"

#include <httplib.h>

#include <chrono>
#include <regex>
#include <string>
#include <thread>
#include <vector>

namespace mive::eval {

/// floor(k (T - 1) / (frames - 1)) for k < frames, deduplicated.
inline std::vector<int> sample_frame_indices(int total, int frames) {
    if (total < 1 || frames < 1) throw UsageError("frame sampling needs positive counts");
    std::vector<int> out;
    if (frames == 1) return {0};
    for (int k = 0; k < frames; ++k) {
        const int idx = static_cast<int>((static_cast<long long>(k) * (total - 1)) / (frames - 1));
        if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
}

struct JudgeOptions {
    int frames = 40;
    int max_attempts = 3;
    double backoff_seconds = 0.2;  // doubled after each failed attempt
    double timeout_seconds = 30.0;
};

inline json judge_request(const datagen::EditSample& s, const Video& out, const std::vector<int>& idx, bool with_ref) {
    json req{{"instruction", s.instruction}, {"frame_indices", idx}};
    if (with_ref) req["ref"] = io::base64_encode(io::encode_png(io::frame_image(s.ref, 0)));
    json src = json::array(), dst = json::array();
    for (int t : idx) {
        src.push_back(io::base64_encode(io::encode_png(io::frame_image(s.src, t))));
        dst.push_back(io::base64_encode(io::encode_png(io::frame_image(out, t))));
    }
    req["src_frames"] = std::move(src);
    req["out_frames"] = std::move(dst);
    return req;
}

/// Parses a judge response; throws DataError on any schema violation.
inline EvalScores parse_judge_response(const json& body) {
    std::vector<json> entries;
    if (body.is_array()) {
        entries.assign(body.begin(), body.end());
    } else if (body.is_object()) {
        for (const auto& [k, v] : body.items())
            if (v.is_object()) entries.push_back(v);
            else entries.push_back(json{{k, v}});
    } else {
        throw DataError("judge response must be a JSON array or object");
    }
    EvalScores s;
    std::array<bool, dim_count> seen{};
    for (const auto& e : entries) {
        if (!e.is_object()) throw DataError("judge response entry is not an object");
        for (int d = 0; d < dim_count; ++d) {
            const std::string key = std::string(dim_names[d]) + "_score";
            if (!e.contains(key)) continue;
            if (!e[key].is_number()) throw DataError("judge score " + key + " is not a number");
            const double v = e[key].get<double>();
            if (!(v >= 0.0 && v <= 10.0)) throw DataError("judge score " + key + " = " + std::to_string(v) + " outside [0, 10]");
            s.value[d] = v;
            s.reasoning[d] = e.contains("reasoning") && e["reasoning"].is_string() ? e["reasoning"].get<std::string>() : "";
            seen[d] = true;
        }
    }
    for (int d = 0; d < dim_count; ++d)
        if (!seen[d]) throw DataError(std::string("judge response missing ") + dim_names[d] + "_score");
    return s;
}

struct Endpoint {
    std::string host;  // scheme://host:port
    std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw UsageError("bad judge endpoint '" + url + "'");
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

inline EvalScores remote_judge(const std::string& endpoint, const datagen::EditSample& s, const Video& out,
                               const JudgeOptions& opt = {}) {
    if (!out.same_shape(s.src)) throw ShapeError("remote judge: output shape mismatch");
    const Endpoint ep = parse_endpoint(endpoint);
    const auto idx = sample_frame_indices(out.dim(0), opt.frames);
    const std::string body = judge_request(s, out, idx, s.ref.size() > 0).dump();

    httplib::Client client(ep.host);
    const auto timeout = std::chrono::duration<double>(opt.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    std::string last;
    double wait = opt.backoff_seconds;
    for (int attempt = 1; attempt <= opt.max_attempts; ++attempt) {
        auto res = client.Post(ep.path, body, "application/json");
        if (res && res->status == 200) {
            json parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) throw DataError("judge response is not valid JSON (attempt " + std::to_string(attempt) + ")");
            return parse_judge_response(parsed);
        }
        last = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < opt.max_attempts) {
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
            wait *= 2;
        }
    }
    throw NetworkError("judge request to " + endpoint + " failed: " + last, opt.max_attempts);
}

}  // namespace mive::eval
