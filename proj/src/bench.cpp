#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "pisr/bench.hpp"
#include "pisr/random.hpp"
#include "pisr/tree_metric.hpp"

namespace pisr {

using nlohmann::json;

namespace {

std::string level_text(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", level);
    return buf;
}

const json& require(const json& doc, const char* field) {
    if (!doc.is_object() || !doc.contains(field)) {
        throw PlanError(std::string("plan is missing required field '") + field + "'");
    }
    return doc.at(field);
}

template <class T>
T read_as(const json& value, const std::string& field) {
    try {
        return value.get<T>();
    } catch (const json::exception&) {
        throw PlanError("plan field '" + field + "' has the wrong type");
    }
}

template <class F>
auto with_field(const std::string& field, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PlanError&) {
        throw;
    } catch (const std::exception& e) {
        throw PlanError("plan field '" + field + "': " + e.what());
    }
}

CriticSpec parse_critic(const json& c, std::size_t index) {
    const std::string where = "critics[" + std::to_string(index) + "]";
    if (!c.is_object()) {
        throw PlanError("plan field '" + where + "' must be an object");
    }
    if (!c.contains("kind")) {
        throw PlanError("plan is missing required field '" + where + ".kind'");
    }
    CriticSpec spec;
    const auto kind = read_as<std::string>(c.at("kind"), where + ".kind");
    if (c.contains("variant")) {
        spec.variant = with_field(where + ".variant",
                                  [&] { return variant_from_letter(read_as<std::string>(c.at("variant"), where)); });
    }
    if (kind == "null") {
        spec.kind = CriticKind::Null;
        spec.label = "null";
    } else if (kind == "mock") {
        spec.kind = CriticKind::Mock;
        spec.label = "mock";
    } else if (kind == "llm") {
        const json endpoint = c.value("endpoint", json::object());
        spec.endpoint.base_url = endpoint.value("base_url", std::string{});
        spec.endpoint.model_name = endpoint.value("model", std::string{});
        spec.endpoint.token_env = endpoint.value("token_env", std::string{});
        spec.endpoint.timeout = std::chrono::milliseconds(endpoint.value("timeout_ms", 30000));
        spec.endpoint.max_retries = endpoint.value("max_retries", 2);
        if (spec.endpoint.base_url.empty()) {
            // No live endpoint: substitute the rule-based critic and say so.
            spec.kind = CriticKind::Mock;
            spec.label = "mock";
        } else {
            spec.kind = CriticKind::Llm;
            spec.label = spec.endpoint.model_name.empty() ? "llm" : spec.endpoint.model_name;
        }
    } else {
        throw PlanError("plan field '" + where + ".kind' must be null, mock or llm");
    }
    if (c.contains("label") && spec.kind != CriticKind::Mock) {
        spec.label = read_as<std::string>(c.at("label"), where + ".label");
    }
    return spec;
}

std::unique_ptr<Critic> make_critic(const CriticSpec& spec, const ScenarioSpec& scenario,
                                    const std::shared_ptr<VerdictCache>& cache) {
    switch (spec.kind) {
    case CriticKind::Null:
        return std::make_unique<NullCritic>();
    case CriticKind::Mock:
        return std::make_unique<MockCritic>(scenario);
    default:
        return std::make_unique<LlmCritic>(spec.endpoint, make_prompt_context(spec.variant, scenario),
                                           scenario.schema, cache);
    }
}

}  // namespace

FitMetrics fit_metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    if (pred.size() != truth.size() || truth.size() < 2) {
        throw MetricError("fit_metrics needs two equal-length vectors of at least 2 samples");
    }
    const Eigen::ArrayXd r = (pred - truth).array();
    const double ss_res = r.square().sum();
    const double ss_tot = (truth.array() - truth.mean()).square().sum();
    if (!(ss_tot > 0.0)) {
        throw MetricError("r2 is undefined for a constant truth vector");
    }
    FitMetrics m;
    m.mae = r.abs().mean();
    m.mse = ss_res / static_cast<double>(truth.size());
    m.r2 = 1.0 - ss_res / ss_tot;
    return m;
}

void ExperimentPlan::validate() const {
    if (scenarios.empty()) throw PlanError("plan field 'scenarios' must not be empty");
    if (presets.empty()) throw PlanError("plan field 'presets' must not be empty");
    if (critics.empty()) throw PlanError("plan field 'critics' must not be empty");
    if (repeats < 1) throw PlanError("plan field 'repeats' must be at least 1");
    if (n_samples < 2 || holdout_samples < 2) throw PlanError("sample counts must be at least 2");
    for (const auto& p : noise_axis) {
        if (!std::isfinite(p.level) || p.level < 0.0) {
            throw PlanError("plan field 'noise_axis' holds a negative level");
        }
    }
    if (weights) {
        with_field("engine.weights", [&] { weights->validate(); });
    }
}

ExperimentPlan parse_plan(const json& doc) {
    if (!doc.is_object()) {
        throw PlanError("plan must be a JSON object");
    }
    ExperimentPlan plan;
    for (const auto& s : require(doc, "scenarios")) {
        plan.scenarios.push_back(with_field("scenarios", [&] {
            return scenario_from_name(read_as<std::string>(s, "scenarios"));
        }));
    }
    for (const auto& p : require(doc, "presets")) {
        plan.presets.push_back(with_field("presets", [&] {
            return preset_from_name(read_as<std::string>(p, "presets"));
        }));
    }
    const json& critics = require(doc, "critics");
    if (!critics.is_array()) throw PlanError("plan field 'critics' must be an array");
    for (std::size_t i = 0; i < critics.size(); ++i) {
        plan.critics.push_back(parse_critic(critics[i], i));
    }
    if (doc.contains("noise_axis")) {
        for (const auto& n : doc.at("noise_axis")) {
            NoisePoint p;
            p.target = with_field("noise_axis", [&] {
                return noise_target_from_name(read_as<std::string>(require(n, "target"), "noise_axis.target"));
            });
            p.level = read_as<double>(require(n, "level"), "noise_axis.level");
            plan.noise_axis.push_back(p);
        }
    }
    if (doc.contains("repeats")) plan.repeats = read_as<std::size_t>(doc.at("repeats"), "repeats");
    if (doc.contains("base_seed")) plan.base_seed = read_as<std::uint64_t>(doc.at("base_seed"), "base_seed");
    if (doc.contains("n_samples")) plan.n_samples = read_as<std::size_t>(doc.at("n_samples"), "n_samples");
    if (doc.contains("holdout_samples")) {
        plan.holdout_samples = read_as<std::size_t>(doc.at("holdout_samples"), "holdout_samples");
    }
    if (doc.contains("critic_cache")) {
        plan.critic_cache = read_as<std::string>(doc.at("critic_cache"), "critic_cache");
    }
    if (doc.contains("engine")) {
        const json& e = doc.at("engine");
        if (e.contains("population")) plan.population_size = read_as<std::size_t>(e.at("population"), "engine.population");
        if (e.contains("generations")) plan.generations = read_as<std::size_t>(e.at("generations"), "engine.generations");
        if (e.contains("critic_budget")) {
            plan.critic_budget = read_as<std::size_t>(e.at("critic_budget"), "engine.critic_budget");
        }
        if (e.contains("threads")) plan.threads = read_as<std::size_t>(e.at("threads"), "engine.threads");
        if (e.contains("weights")) {
            const auto w = read_as<std::vector<double>>(e.at("weights"), "engine.weights");
            if (w.size() != 3) throw PlanError("plan field 'engine.weights' must hold three values");
            plan.weights = FitnessWeights{w[0], w[1], w[2]};
        }
    }
    plan.validate();
    return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PlanError("cannot open plan file " + path.string());
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw PlanError("plan file " + path.string() + " is not valid JSON");
    }
    return parse_plan(doc);
}

std::string RunReport::key() const {
    char rep[16];
    std::snprintf(rep, sizeof rep, "r%03zu", repeat);
    return scenario + "/" + preset + "/" + critic + "/" + variant + "/" + noise_target + "/" +
           level_text(noise_level) + "/" + rep;
}

std::vector<RunReport> run_plan(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<NoisePoint> noise_axis = plan.noise_axis;
    if (noise_axis.empty()) {
        const NoiseSpec fallback;
        noise_axis.push_back({fallback.target, fallback.level});
    }
    auto cache = plan.critic_cache ? std::make_shared<VerdictCache>(*plan.critic_cache)
                                   : std::make_shared<VerdictCache>();

    std::vector<RunReport> reports;
    for (ScenarioId sid : plan.scenarios) {
        const ScenarioSpec scenario = make_scenario(sid);
        for (const NoisePoint& np : noise_axis) {
            for (std::size_t rep = 0; rep < plan.repeats; ++rep) {
                const std::uint64_t data_seed =
                    derive_seed({plan.base_seed, hash_string(scenario_name(sid)), hash_string(noise_target_name(np.target)),
                                 hash_string(level_text(np.level)), rep});
                for (PresetId pid : plan.presets) {
                    for (const CriticSpec& cs : plan.critics) {
                        RunReport r;
                        r.scenario = scenario_name(sid);
                        r.preset = preset_name(pid);
                        r.critic = cs.label;
                        r.variant = variant_letter(cs.variant);
                        r.noise_target = noise_target_name(np.target);
                        r.noise_level = np.level;
                        r.repeat = rep;
                        r.data_seed = data_seed;
                        r.engine_seed = derive_seed({plan.base_seed, hash_string(r.key())});

                        const auto started = std::chrono::steady_clock::now();
                        try {
                            SamplingRanges ranges;
                            ranges.n_samples = plan.n_samples;
                            const Dataset train = generate(scenario, ranges, NoiseSpec{np.level, np.target}, data_seed);
                            ranges.n_samples = plan.holdout_samples;
                            const Dataset holdout = generate(scenario, ranges, NoiseSpec{0.0, NoiseTarget::None},
                                                             derive_seed({data_seed, hash_string("holdout")}));

                            EngineConfig cfg = preset_config(pid);
                            if (plan.population_size) cfg.population_size = *plan.population_size;
                            if (plan.generations) cfg.generations = *plan.generations;
                            if (plan.weights) cfg.weights = *plan.weights;
                            if (plan.critic_budget) cfg.critic_budget = *plan.critic_budget;
                            cfg.threads = plan.threads;
                            cfg.seed = r.engine_seed;

                            auto critic = make_critic(cs, scenario, cache);
                            const SearchResult result = run(train, cfg, *critic);

                            const BatchEvaluation pred = evaluate(result.best, holdout.X);
                            const FitMetrics m = fit_metrics(pred.values, holdout.y);
                            r.mae = m.mae;
                            r.mse = m.mse;
                            r.r2 = m.r2;
                            r.tree_score = pisr::tree_score(result.best, scenario.gt_tree);
                            r.best_equation = render(result.best, scenario.schema);
                            r.generations_used = result.generations;
                            r.critic_calls = result.critic.calls;
                            r.critic_failures = result.critic.failures;
                        } catch (const std::exception& e) {
                            r.failure = e.what();
                        }
                        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
                        reports.push_back(std::move(r));
                    }
                }
            }
        }
    }
    return reports;
}

}  // namespace pisr
