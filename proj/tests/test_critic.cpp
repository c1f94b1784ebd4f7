#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pisr/critic.hpp"
#include "pisr/random.hpp"
#include "pisr/units.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace pisr;
namespace b = pisr::build;

#ifndef PISR_SOURCE_DIR
#define PISR_SOURCE_DIR "."
#endif

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Chat-completion stand-in answering every request with `reply`.
class StubServer {
public:
    explicit StubServer(std::string reply, int status = 200) : reply_(std::move(reply)), status_(status) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mutex_);
                ++requests_;
                last_body_ = req.body;
                last_auth_ = req.get_header_value("Authorization");
            }
            res.status = status_;
            const nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply_}}}}}}};
            res.set_content(body.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    std::string last_body() const {
        std::lock_guard lock(mutex_);
        return last_body_;
    }
    std::string last_auth() const {
        std::lock_guard lock(mutex_);
        return last_auth_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    std::string reply_;
    int status_;
    int port_ = 0;
    mutable std::mutex mutex_;
    int requests_ = 0;
    std::string last_body_;
    std::string last_auth_;
};

LlmEndpoint endpoint_for(const std::string& url) {
    LlmEndpoint ep;
    ep.base_url = url;
    ep.model_name = "stub-7b";
    ep.timeout = std::chrono::milliseconds(2000);
    ep.max_retries = 1;
    ep.initial_backoff = std::chrono::milliseconds(1);
    return ep;
}

}  // namespace

TEST_CASE("few-shot outputs parse to their scores") {
    const CriticVerdict v1 = parse_verdict("[0.95, 0.80, 0.92, \"Classic kinematics\"]");
    CHECK(v1.dim_corr == 0.95);
    CHECK(v1.simp == 0.80);
    CHECK(v1.sim == 0.92);
    CHECK(v1.feedback == "Classic kinematics");
    // 1 - 2.67 / 3
    CHECK(std::abs(v1.c - 0.11) < 1e-12);
    CHECK_FALSE(v1.clamped);
    CHECK_FALSE(v1.extra_text);

    const CriticVerdict v2 = parse_verdict("[0.05, 0.70, 0.15, \"Units mismatch\"]");
    CHECK(std::abs(v2.c - 0.70) < 1e-12);

    const CriticVerdict v3 = parse_verdict("[0.90, 0.10, 0.40, \"Needless nesting\"]");
    CHECK(std::abs(v3.c - (1.0 - 1.4 / 3.0)) < 1e-12);
}

TEST_CASE("verdict extraction policy") {
    const CriticVerdict chatty = parse_verdict("Sure! Here you go: [1, 1, 1, \"ok\"] hope that helps");
    CHECK(chatty.c == 0.0);
    CHECK(chatty.extra_text);

    const CriticVerdict loud = parse_verdict("[1.2, -0.1, 0.5, 'single quoted']");
    CHECK(loud.clamped);
    CHECK(loud.dim_corr == 1.0);
    CHECK(loud.simp == 0.0);
    CHECK(loud.feedback == "single quoted");

    // a broken list first, then a good one
    const CriticVerdict second = parse_verdict("[dim_corr, simp] then [0.5, 0.5, 0.5, \"fine \\\"quoted\\\"\"]");
    CHECK(second.c == 0.5);
    CHECK(second.feedback == "fine \"quoted\"");

    CHECK(parse_verdict("[ +0.5 ,0.25,0.75,\"x\" ]").simp == 0.25);

    try {
        parse_verdict("I cannot answer that.");
        FAIL("expected a parse error");
    } catch (const CriticParseError& e) {
        CHECK(e.raw() == "I cannot answer that.");
    }
    CHECK_THROWS_AS(parse_verdict("[0.1, 0.2, 0.3]"), CriticParseError);
    CHECK_THROWS_AS(parse_verdict("[0.1, 0.2, nan, \"x\"]"), CriticParseError);
    CHECK_THROWS_AS(parse_verdict("[0.1, 0.2, 0.3, \"unterminated]"), CriticParseError);
}

TEST_CASE("parser is total on arbitrary bytes") {
    Rng rng(99);
    const std::string alphabet = "[]\"',0123456789.+-e xyz\\";
    for (int k = 0; k < 5000; ++k) {
        std::string raw;
        const auto len = rng.below(40);
        for (std::uint64_t i = 0; i < len; ++i) {
            raw += rng.chance(0.2) ? static_cast<char>(rng.below(256)) : alphabet[rng.below(alphabet.size())];
        }
        try {
            const CriticVerdict v = parse_verdict(raw);
            REQUIRE(v.dim_corr >= 0.0);
            REQUIRE(v.dim_corr <= 1.0);
            REQUIRE(std::abs(v.c - (1.0 - (v.dim_corr + v.simp + v.sim) / 3.0)) < 1e-12);
        } catch (const CriticParseError&) {
        }
    }
}

TEST_CASE("aggregation extremes") {
    CHECK(aggregate_scores(1, 1, 1) == 0.0);
    CHECK(aggregate_scores(0, 0, 0) == 1.0);
    CHECK(make_verdict(0.3, 0.6, 0.9, "").c == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("variant H prompt matches the golden file") {
    const auto scenario = make_scenario(ScenarioId::DropBall);
    const auto ctx = make_prompt_context(PromptVariant::H, scenario);
    const std::string prompt = build_prompt("y = " + render(scenario.gt_tree, scenario.schema), ctx);
    CHECK(prompt == slurp(std::filesystem::path(PISR_SOURCE_DIR) / "tests/golden/prompt_drop_ball_H.txt"));
    CHECK(build_prompt("y = x", ctx) == build_prompt("y = x", ctx));
    CHECK_THROWS(build_prompt("", ctx));
}

TEST_CASE("each variant carries exactly its components") {
    const auto scenario = make_scenario(ScenarioId::Shm);
    const std::string vars = "Variables:\n- m [kg]: oscillating mass";
    const std::string experiment = "Experiment description: " + scenario.description;
    const std::string gt = "Ground-truth equation: y = " + render(scenario.gt_tree, scenario.schema);
    struct Expect {
        char letter;
        bool b, c, d;
    };
    for (const Expect e : {Expect{'A', 0, 0, 0}, Expect{'B', 1, 0, 0}, Expect{'C', 0, 1, 0}, Expect{'D', 0, 0, 1},
                           Expect{'E', 1, 1, 0}, Expect{'F', 1, 0, 1}, Expect{'G', 0, 1, 1}, Expect{'H', 1, 1, 1}}) {
        CAPTURE(e.letter);
        const auto v = variant_from_letter(std::string(1, e.letter));
        CHECK(variant_letter(v) == e.letter);
        const std::string p = build_prompt("y = A", make_prompt_context(v, scenario));
        CHECK((p.find(vars) != std::string::npos) == e.b);
        CHECK((p.find(experiment) != std::string::npos) == e.c);
        CHECK((p.find(gt) != std::string::npos) == e.d);
        CHECK((p.find("Context:") != std::string::npos) == (e.b || e.c || e.d));
    }
    const std::string h = build_prompt("y = A", make_prompt_context(PromptVariant::H, scenario));
    CHECK(h.find(vars) < h.find(experiment));
    CHECK(h.find(experiment) < h.find(gt));
    CHECK_THROWS(variant_from_letter("I"));
}

TEST_CASE("wire format") {
    LlmEndpoint ep;
    ep.model_name = "mistral-7b";
    const auto body = nlohmann::json::parse(chat_request_body(ep, "hello"));
    CHECK(body.at("model") == "mistral-7b");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("max_tokens") == 256);
    CHECK(body.at("messages").size() == 1);
    CHECK(body.at("messages")[0].at("role") == "user");
    CHECK(body.at("messages")[0].at("content") == "hello");

    CHECK(chat_response_content(R"({"choices":[{"message":{"content":"[1,1,1,\"x\"]"}}]})") == "[1,1,1,\"x\"]");
    CHECK_THROWS_AS(chat_response_content("{}"), CriticParseError);
    CHECK_THROWS_AS(chat_response_content("not json"), CriticParseError);
}

TEST_CASE("scoring through a stub server uses the cache") {
    StubServer server("[0.90, 0.10, 0.40, \"Needless nesting\"]");
    const auto scenario = make_scenario(ScenarioId::Shm);
    const auto ctx = make_prompt_context(PromptVariant::E, scenario);
    auto ep = endpoint_for(server.url());
    ep.token_env = "PISR_TEST_TOKEN";
    ::setenv("PISR_TEST_TOKEN", "sekrit", 1);

    VerdictCache cache;
    const auto eq = b::sin(b::sin(b::var(3)));
    const CriticVerdict v = score(eq, scenario.schema, ctx, ep, cache);
    CHECK(v.dim_corr == 0.90);
    CHECK(std::abs(v.c - 0.5333333333333333) < 1e-12);
    CHECK(server.requests() == 1);
    CHECK(server.last_auth() == "Bearer sekrit");
    const auto sent = nlohmann::json::parse(server.last_body());
    CHECK(sent.at("messages")[0].at("content").get<std::string>().find("y = sin(sin(phi))") != std::string::npos);

    score(eq, scenario.schema, ctx, ep, cache);
    CHECK(server.requests() == 1);
    // commutatively equal equations share a verdict
    score(b::add(b::var(0), b::var(1)), scenario.schema, ctx, ep, cache);
    score(b::add(b::var(1), b::var(0)), scenario.schema, ctx, ep, cache);
    CHECK(server.requests() == 2);
    // a different variant is a different key
    score(eq, scenario.schema, make_prompt_context(PromptVariant::A, scenario), ep, cache);
    CHECK(server.requests() == 3);
    ::unsetenv("PISR_TEST_TOKEN");
}

TEST_CASE("transport and parse failures after retries") {
    const auto scenario = make_scenario(ScenarioId::DropBall);
    const auto ctx = make_prompt_context(PromptVariant::A, scenario);
    VerdictCache cache;
    {
        StubServer broken("irrelevant", 500);
        CHECK_THROWS_AS(score(b::var(2), scenario.schema, ctx, endpoint_for(broken.url()), cache),
                        CriticTransportError);
        CHECK(broken.requests() == 2);
    }
    {
        StubServer rambling("no list here");
        try {
            score(b::var(2), scenario.schema, ctx, endpoint_for(rambling.url()), cache);
            FAIL("expected a parse error");
        } catch (const CriticParseError& e) {
            CHECK(e.raw() == "no list here");
        }
        CHECK(rambling.requests() == 2);
    }
    // nothing listens on port 9 of the loopback interface
    CHECK_THROWS_AS(score(b::var(2), scenario.schema, ctx, endpoint_for("http://127.0.0.1:9"), cache),
                    CriticTransportError);
    CHECK_THROWS_AS(score(b::var(2), scenario.schema, ctx, endpoint_for("https://example.invalid"), cache),
                    CriticTransportError);
    CHECK(cache.size() == 0);
}

TEST_CASE("verdict cache persists as JSON lines") {
    const auto path = std::filesystem::temp_directory_path() / "pisr_test_cache.jsonl";
    std::filesystem::remove(path);
    {
        VerdictCache cache(path);
        cache.store("k1", make_verdict(0.9, 0.8, 0.7, "good"), "m");
        cache.store("k2", make_verdict(0.1, 0.2, 0.3, "bad"), "m");
    }
    std::ofstream(path, std::ios::app) << "{broken\n";
    VerdictCache reloaded(path);
    CHECK(reloaded.size() == 2);
    REQUIRE(reloaded.find("k1").has_value());
    CHECK(reloaded.find("k1")->feedback == "good");
    CHECK(reloaded.find("k2")->c == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_FALSE(reloaded.find("k3").has_value());
    const auto first = nlohmann::json::parse(slurp(path).substr(0, slurp(path).find('\n')));
    CHECK(first.at("key") == "k1");
    CHECK(first.at("model") == "m");
    CHECK(first.contains("timestamp"));
}

TEST_CASE("units") {
    CHECK(parse_unit("m/s^2")->same_as(*parse_unit("m s^-2")));
    CHECK(parse_unit("N")->same_as(*parse_unit("kg m s^-2")));
    CHECK(parse_unit("rad")->dimensionless());
    CHECK(parse_unit("")->dimensionless());
    CHECK_FALSE(parse_unit("furlong").has_value());

    for (ScenarioId id : {ScenarioId::DropBall, ScenarioId::Shm, ScenarioId::EmWave}) {
        const auto s = make_scenario(id);
        CHECK(count_unit_violations(s.gt_tree, s.schema, s.target_unit) == 0);
    }
    const auto drop = make_scenario(ScenarioId::DropBall);
    // m + h: kg plus m, and the sum is not m/s either way
    CHECK(count_unit_violations(b::add(b::var(0), b::var(2)), drop.schema, drop.target_unit) == 1);
    // sin(h): dimensioned argument, dimensionless result against m/s
    CHECK(count_unit_violations(b::sin(b::var(2)), drop.schema, drop.target_unit) == 2);
    // h / t is already m/s
    CHECK(count_unit_violations(b::div(b::var(2), b::var(4)), drop.schema, drop.target_unit) == 0);
    // h ^ t: dimensioned exponent and a dimensioned base with a non-literal power
    CHECK(count_unit_violations(b::pow(b::var(2), b::var(4)), drop.schema, drop.target_unit) == 2);
}

TEST_CASE("mock critic rules") {
    const auto shm = make_scenario(ScenarioId::Shm);
    const CriticVerdict gt = mock_score(shm.gt_tree, shm);
    CHECK(gt.dim_corr == 1.0);
    CHECK(gt.sim == 1.0);
    CHECK(gt.simp == doctest::Approx(1.0 - static_cast<double>(shm.gt_tree.size()) / 31.0).epsilon(1e-15));

    const auto drop = make_scenario(ScenarioId::DropBall);
    // kg plus m/s, the "E = m + c" pattern
    const auto mismatch = b::add(b::var(0), b::div(b::var(2), b::var(4)));
    CHECK(mock_score(mismatch, drop).dim_corr <= 0.75);

    const auto nested = b::sin(b::sin(b::var(3)));
    const CriticVerdict n = mock_score(nested, shm);
    CHECK(n.sim < gt.sim);
    CHECK(n.simp == doctest::Approx(1.0 - 3.0 / 31.0).epsilon(1e-15));

    const std::string first = mock_score(mismatch, drop).feedback;
    for (int k = 0; k < 1000; ++k) {
        const CriticVerdict again = mock_score(mismatch, drop);
        REQUIRE(again.feedback == first);
        REQUIRE(again.c == mock_score(mismatch, drop).c);
    }
}

TEST_CASE("critic handles") {
    NullCritic null;
    CHECK(null.is_null());
    CHECK(null.score(b::var(0)).c == 0.5);
    const auto drop = make_scenario(ScenarioId::DropBall);
    MockCritic mock(drop);
    CHECK_FALSE(mock.is_null());
    CHECK(mock.label() == "mock");
    CHECK(mock.score(drop.gt_tree).sim == 1.0);

    StubServer server("[1, 1, 1, \"perfect\"]");
    LlmCritic llm(endpoint_for(server.url()), make_prompt_context(PromptVariant::B, drop), drop.schema);
    CHECK(llm.label() == "stub-7b");
    CHECK(llm.score(drop.gt_tree).c == 0.0);
    CHECK(llm.score(drop.gt_tree).c == 0.0);
    CHECK(server.requests() == 1);
}
