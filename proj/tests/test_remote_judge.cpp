#include "mive/remote_judge.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace mive;
using namespace mive::eval;

namespace {

json full_response() {
    json arr = json::array();
    for (int d = 0; d < dim_count; ++d)
        arr.push_back({{std::string(dim_names[d]) + "_score", 5.0 + d * 0.5}, {"reasoning", std::string("r") + dim_names[d]}});
    return arr;
}

/// Local judge server on an ephemeral port; `handler` decides each reply.
class MockJudge {
public:
    explicit MockJudge(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/judge", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++calls;
            last_body = req.body;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockJudge() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/judge"; }

    std::atomic<int> calls{0};
    std::string last_body;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

JudgeOptions fast() {
    JudgeOptions o;
    o.backoff_seconds = 0.01;
    o.timeout_seconds = 5;
    return o;
}

}  // namespace

TEST(FrameSampling, IndexFormula) {
    std::vector<int> all9{0, 1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_EQ(sample_frame_indices(9, 40), all9);
    EXPECT_EQ(sample_frame_indices(81, 5), (std::vector<int>{0, 20, 40, 60, 80}));
    EXPECT_EQ(sample_frame_indices(9, 1), std::vector<int>{0});
    const auto idx = sample_frame_indices(81, 40);
    EXPECT_EQ(idx.size(), 40u);
    EXPECT_EQ(idx.front(), 0);
    EXPECT_EQ(idx.back(), 80);
    EXPECT_THROW(sample_frame_indices(0, 4), UsageError);
}

TEST(JudgeResponse, ParsesArrayAndObjectForms) {
    const auto s = parse_judge_response(full_response());
    EXPECT_EQ(s[IA], 5.0);
    EXPECT_EQ(s[SC], 7.5);
    EXPECT_EQ(s.reasoning[CC], "rCC");
    json obj = json::object();
    for (int d = 0; d < dim_count; ++d)
        obj[dim_names[d]] = {{std::string(dim_names[d]) + "_score", 9.0}, {"reasoning", "fine"}};
    EXPECT_EQ(parse_judge_response(obj)[PR], 9.0);
}

TEST(JudgeResponse, SchemaViolations) {
    auto missing = full_response();
    missing.erase(missing.begin() + 2);
    EXPECT_THROW(parse_judge_response(missing), DataError);
    auto out_of_range = full_response();
    out_of_range[0]["IA_score"] = 11;
    EXPECT_THROW(parse_judge_response(out_of_range), DataError);
    auto wrong_type = full_response();
    wrong_type[1]["CC_score"] = "high";
    EXPECT_THROW(parse_judge_response(wrong_type), DataError);
    EXPECT_THROW(parse_judge_response(json(3)), DataError);
}

TEST(RemoteJudge, RoundTripThroughMockServer) {
    MockJudge mock([](const httplib::Request&, httplib::Response& res) {
        res.set_content(full_response().dump(), "application/json");
    });
    const auto s = datagen::generate_sample(datagen::EditType::recolor, 1);
    const auto scores = remote_judge(mock.url(), s, s.tgt, fast());
    EXPECT_EQ(scores, parse_judge_response(full_response()));
    EXPECT_EQ(mock.calls.load(), 1);
    const auto req = json::parse(mock.last_body);
    EXPECT_EQ(req.at("instruction").get<std::string>(), s.instruction);
    EXPECT_EQ(req.at("frame_indices").size(), 9u);
    EXPECT_EQ(req.at("src_frames").size(), 9u);
    EXPECT_EQ(req.at("out_frames").size(), 9u);
    EXPECT_TRUE(req.contains("ref"));
    // Base64 of the PNG signature.
    EXPECT_EQ(req.at("out_frames")[4].get<std::string>().rfind("iVBORw0KGgo", 0), 0u);
}

TEST(RemoteJudge, RetriesThenSucceeds) {
    std::atomic<int> n{0};
    MockJudge mock([&](const httplib::Request&, httplib::Response& res) {
        if (++n < 3) {
            res.status = 503;
            return;
        }
        res.set_content(full_response().dump(), "application/json");
    });
    const auto s = datagen::generate_sample(datagen::EditType::del, 1);
    EXPECT_NO_THROW(remote_judge(mock.url(), s, s.tgt, fast()));
    EXPECT_EQ(mock.calls.load(), 3);
}

TEST(RemoteJudge, PersistentFailureReportsAttempts) {
    MockJudge mock([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const auto s = datagen::generate_sample(datagen::EditType::del, 1);
    try {
        remote_judge(mock.url(), s, s.tgt, fast());
        FAIL() << "expected NetworkError";
    } catch (const NetworkError& e) {
        EXPECT_EQ(e.attempts, 3);
        EXPECT_EQ(e.kind(), ErrorKind::network);
        EXPECT_NE(std::string(e.what()).find("attempts=3"), std::string::npos);
    }
    EXPECT_EQ(mock.calls.load(), 3);
}

TEST(RemoteJudge, UnreachableEndpointAndBadResponses) {
    const auto s = datagen::generate_sample(datagen::EditType::del, 1);
    auto o = fast();
    o.max_attempts = 2;
    o.timeout_seconds = 1;
    EXPECT_THROW(remote_judge("http://127.0.0.1:1/judge", s, s.tgt, o), NetworkError);
    EXPECT_THROW(remote_judge("ftp://nowhere", s, s.tgt, o), UsageError);
    MockJudge bad([](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
    EXPECT_THROW(remote_judge(bad.url(), s, s.tgt, o), DataError);
}

TEST(Endpoint, Parsing) {
    const auto e = parse_endpoint("http://localhost:8080/v1/judge");
    EXPECT_EQ(e.host, "http://localhost:8080");
    EXPECT_EQ(e.path, "/v1/judge");
    EXPECT_EQ(parse_endpoint("https://judge.example").path, "/");
}
