#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pisr/bench.hpp"
#include "pisr/random.hpp"

using namespace pisr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

json tiny_plan() {
    return json{
        {"scenarios", {"drop_ball"}},
        {"presets", {"deap_like"}},
        {"critics", {{{"kind", "null"}}}},
        {"repeats", 1},
        {"base_seed", 11},
        {"n_samples", 60},
        {"holdout_samples", 60},
        {"engine", {{"population", 16}, {"generations", 4}, {"weights", {0.6, 0.1, 0.3}}}},
    };
}

RunReport fake(std::string scenario, std::string critic, std::string preset, double ts, double mae) {
    RunReport r;
    r.scenario = std::move(scenario);
    r.critic = std::move(critic);
    r.preset = std::move(preset);
    r.noise_target = "target";
    r.noise_level = 0.01;
    r.tree_score = ts;
    r.mae = mae;
    r.mse = mae * mae;
    r.r2 = 0.5;
    return r;
}

}  // namespace

TEST_CASE("fit metrics by hand") {
    Eigen::VectorXd truth(3), pred(3);
    truth << 1, 2, 3;
    pred << 1, 2, 4;
    const FitMetrics m = fit_metrics(pred, truth);
    CHECK(std::abs(m.mae - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(m.mse - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(m.r2 - 0.5) < 1e-15);

    const FitMetrics perfect = fit_metrics(truth, truth);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.mse == 0.0);
    CHECK(perfect.r2 == 1.0);

    const FitMetrics flat = fit_metrics(Eigen::VectorXd::Constant(3, 2.0), truth);
    CHECK(std::abs(flat.r2) < 1e-15);

    CHECK_THROWS_AS(fit_metrics(truth, Eigen::VectorXd::Constant(3, 1.0)), MetricError);
    CHECK_THROWS_AS(fit_metrics(Eigen::VectorXd::Zero(2), truth), MetricError);
    CHECK_THROWS_AS(fit_metrics(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), MetricError);
}

TEST_CASE("fit metrics against a loop implementation") {
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        Eigen::VectorXd p(10), t(10);
        for (int i = 0; i < 10; ++i) {
            p(i) = rng.normal(0.0, 3.0);
            t(i) = rng.normal(1.0, 2.0);
        }
        double abs_sum = 0.0, sq_sum = 0.0, mean = 0.0, tot = 0.0;
        for (int i = 0; i < 10; ++i) mean += t(i) / 10.0;
        for (int i = 0; i < 10; ++i) {
            abs_sum += std::fabs(p(i) - t(i));
            sq_sum += (p(i) - t(i)) * (p(i) - t(i));
            tot += (t(i) - mean) * (t(i) - mean);
        }
        const FitMetrics m = fit_metrics(p, t);
        REQUIRE(m.mae == doctest::Approx(abs_sum / 10.0).epsilon(1e-12));
        REQUIRE(m.mse == doctest::Approx(sq_sum / 10.0).epsilon(1e-12));
        REQUIRE(m.r2 == doctest::Approx(1.0 - sq_sum / tot).epsilon(1e-12));
    }
}

TEST_CASE("plan parsing") {
    const ExperimentPlan plan = parse_plan(tiny_plan());
    CHECK(plan.scenarios.size() == 1);
    CHECK(plan.repeats == 1);
    CHECK(plan.population_size == 16u);
    CHECK(plan.noise_axis.empty());

    for (const char* field : {"scenarios", "presets", "critics"}) {
        json doc = tiny_plan();
        doc.erase(field);
        try {
            parse_plan(doc);
            FAIL("expected a plan error");
        } catch (const PlanError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    }
    CHECK_THROWS_AS(parse_plan(json::object()), PlanError);

    json bad = tiny_plan();
    bad["presets"] = {"eureqa_like"};
    CHECK_THROWS_AS(parse_plan(bad), PlanError);
    bad = tiny_plan();
    bad["repeats"] = 0;
    CHECK_THROWS_AS(parse_plan(bad), PlanError);
    bad = tiny_plan();
    bad["engine"]["weights"] = {0.5, 0.5};
    CHECK_THROWS_AS(parse_plan(bad), PlanError);

    json llm = tiny_plan();
    llm["critics"] = {{{"kind", "llm"}, {"variant", "E"}, {"label", "mistral"}}};
    const auto fallback = parse_plan(llm);
    CHECK(fallback.critics[0].kind == CriticKind::Mock);
    CHECK(fallback.critics[0].label == "mock");
    CHECK(fallback.critics[0].variant == PromptVariant::E);

    llm["critics"][0]["endpoint"] = {{"base_url", "http://127.0.0.1:8080"}, {"model", "mistral-7b"}};
    const auto live = parse_plan(llm);
    CHECK(live.critics[0].kind == CriticKind::Llm);
    CHECK(live.critics[0].label == "mistral");
}

TEST_CASE("a single cell yields a single report") {
    const auto reports = run_plan(parse_plan(tiny_plan()));
    REQUIRE(reports.size() == 1);
    const RunReport& r = reports[0];
    CHECK(r.ok());
    CHECK(r.r2 <= 1.0);
    CHECK(r.mae >= 0.0);
    CHECK(r.tree_score >= 0.0);
    CHECK(r.tree_score <= 1.0);
    CHECK(r.generations_used >= 1);
    CHECK(r.critic_calls == 0);
    CHECK(r.key() == "drop_ball/deap_like/null/A/target/0.01/r000");
}

TEST_CASE("data seeds are shared across presets and critics") {
    json doc = tiny_plan();
    doc["presets"] = {"deap_like", "gplearn_like"};
    doc["critics"] = {{{"kind", "null"}}, {{"kind", "mock"}, {"variant", "H"}}};
    doc["repeats"] = 2;
    const auto reports = run_plan(parse_plan(doc));
    REQUIRE(reports.size() == 8);
    for (const auto& r : reports) {
        for (const auto& s : reports) {
            if (r.repeat == s.repeat) CHECK(r.data_seed == s.data_seed);
            if (r.key() != s.key()) CHECK(r.engine_seed != s.engine_seed);
        }
    }
}

TEST_CASE("noise plans cover every target and level") {
    json doc = tiny_plan();
    doc["presets"] = {"deap_like", "gplearn_like", "pysr_like"};
    doc["engine"]["population"] = 6;
    doc["engine"]["generations"] = 2;
    doc["n_samples"] = 30;
    doc["holdout_samples"] = 30;
    json axis = json::array();
    for (const char* target : {"features", "target", "both"}) {
        for (double level : {0.01, 0.02, 0.03, 0.04, 0.05}) axis.push_back({{"target", target}, {"level", level}});
    }
    doc["noise_axis"] = axis;
    const auto plan = parse_plan(doc);
    const auto reports = run_plan(plan);
    CHECK(reports.size() == 45);

    const fs::path out = fs::temp_directory_path() / "pisr_test_noise";
    fs::remove_all(out);
    render_tables(reports, out, true);
    CHECK(fs::exists(out / "table4_noise.csv"));
    CHECK_FALSE(fs::exists(out / "table2_benchmark.csv"));
    const auto rows = lines_of(slurp(out / "table4_noise.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "scenario,preset,both_1%,both_2%,both_3%,both_4%,both_5%,features_1%,features_2%,features_3%,"
                     "features_4%,features_5%,target_1%,target_2%,target_3%,target_4%,target_5%");
}

TEST_CASE("reports are byte-identical across reruns") {
    json doc = tiny_plan();
    doc["critics"] = {{{"kind", "mock"}, {"variant", "C"}}};
    const auto plan = parse_plan(doc);
    const fs::path a = fs::temp_directory_path() / "pisr_test_rerun_a";
    const fs::path b = fs::temp_directory_path() / "pisr_test_rerun_b";
    fs::remove_all(a);
    fs::remove_all(b);
    render_tables(run_plan(plan), a, false);
    render_tables(run_plan(plan), b, false);
    CHECK(slurp(a / "reports.jsonl") == slurp(b / "reports.jsonl"));
    CHECK(slurp(a / "table2_benchmark.csv") == slurp(b / "table2_benchmark.csv"));
    CHECK(fs::exists(a / "table3_prompts.csv"));
    CHECK(slurp(a / "reports.jsonl").find("wall_time") == std::string::npos);
    CHECK(fs::exists(a / "timings.csv"));
}

TEST_CASE("pivot values, ordering and best marks") {
    std::vector<RunReport> reports{
        fake("shm", "null", "pysr_like", 0.40, 0.5),
        fake("drop_ball", "null", "deap_like", 0.25, 0.123456),
        fake("drop_ball", "null", "gplearn_like", 0.75, 0.2),
        fake("drop_ball", "null", "pysr_like", 0.75, 0.1),
        fake("shm", "null", "deap_like", 0.40, 0.3),
    };
    RunReport failed = fake("shm", "null", "gplearn_like", 0.9, 0.0);
    failed.failure = "boom";
    reports.push_back(failed);

    const fs::path out = fs::temp_directory_path() / "pisr_test_pivot";
    fs::remove_all(out);
    const auto files = render_tables(reports, out, false);
    CHECK_FALSE(fs::exists(out / "table4_noise.csv"));
    CHECK_FALSE(fs::exists(out / "table3_prompts.csv"));

    const auto jsonl = lines_of(slurp(out / "reports.jsonl"));
    REQUIRE(jsonl.size() == 6);
    for (std::size_t i = 1; i < jsonl.size(); ++i) {
        CHECK(json::parse(jsonl[i - 1]).at("key") < json::parse(jsonl[i]).at("key"));
    }
    CHECK(json::parse(jsonl[4]).at("failure") == "boom");

    const auto csv = lines_of(slurp(out / "table2_benchmark.csv"));
    CHECK(csv[0] == "scenario,critic,preset,mae,mse,r2,tree_score");
    CHECK(csv[1] == "drop_ball,null,deap_like,0.123,0.015,0.500,0.250");
    // the failed cell has no values
    CHECK(csv[5] == "shm,null,gplearn_like,,,,");
    for (std::size_t i = 1; i < csv.size(); ++i) {
        const auto src = json::parse(jsonl[i - 1]);
        if (!src.contains("tree_score")) continue;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", src.at("tree_score").get<double>());
        CHECK(csv[i].substr(csv[i].rfind(',') + 1) == buf);
    }

    const std::string summary = slurp(out / "summary.txt");
    // drop_ball: tie at 0.75 broken by the lower mae of pysr_like
    CHECK(summary.find("pysr_like     0.100*") != std::string::npos);
    CHECK(summary.find("gplearn_like  0.200 ") != std::string::npos);
    // shm: tie at 0.40 goes to deap_like (mae 0.3 < 0.5); the failed cell is ignored
    CHECK(summary.find("shm        null    deap_like     0.300*") != std::string::npos);
    CHECK(summary.find("failed: 1") != std::string::npos);
}
