// pisr: command-line front end for data generation, search, equation
// comparison, critic probing and benchmark plans.
//
// Exit codes: 0 success, 1 validation error, 2 critic transport error,
// 3 benchmark finished with failed cells.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pisr/bench.hpp"
#include "pisr/critic.hpp"
#include "pisr/engine.hpp"
#include "pisr/physlab.hpp"
#include "pisr/tree_metric.hpp"

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kTransport = 2, kPartial = 3 };

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

pisr::FitnessWeights parse_weights(const std::string& text) {
    std::vector<double> w;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            w.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ValidationError("--weights: '" + part + "' is not a number");
        }
    }
    if (w.size() != 3) {
        throw ValidationError("--weights needs three comma-separated values, got " + std::to_string(w.size()));
    }
    pisr::FitnessWeights weights{w[0], w[1], w[2]};
    try {
        weights.validate();
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("--weights: ") + e.what());
    }
    return weights;
}

pisr::LlmEndpoint endpoint_from(const std::string& url, const std::string& model, const std::string& token_env,
                                int timeout_ms, int retries) {
    pisr::LlmEndpoint ep;
    ep.base_url = url;
    ep.model_name = model;
    ep.token_env = token_env;
    ep.timeout = std::chrono::milliseconds(timeout_ms);
    ep.max_retries = retries;
    return ep;
}

// Converts a JSON config into "--flag value" arguments for the chosen
// subcommand. They are placed before the explicit flags, and every option
// keeps its last value, so explicit flags win.
std::vector<std::string> config_args(const std::string& path, const std::string& sub, const CLI::App& app) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ValidationError("config file " + path + " is not a JSON object");

    std::vector<std::string> args;
    auto add = [&](const std::string& key, const json& value) {
        const CLI::App* cmd = app.get_subcommand(sub);
        const CLI::Option* opt = nullptr;
        try {
            opt = cmd->get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            return;
        }
        if (opt->get_type_size() == 0) {
            if (value.is_boolean() && value.get<bool>()) args.push_back("--" + key);
            return;
        }
        args.push_back("--" + key);
        args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    };
    for (const auto& [key, value] : doc.items()) {
        if (!value.is_object()) add(key, value);
    }
    if (doc.contains(sub) && doc.at(sub).is_object()) {
        for (const auto& [key, value] : doc.at(sub).items()) add(key, value);
    }
    return args;
}

struct GenArgs {
    std::string scenario;
    std::size_t n = 500;
    double noise_level = 0.01;
    std::string noise_target = "target";
    std::uint64_t seed = 0;
    std::string out;
    std::string shm_form = "sqrt";
};

int cmd_gen(const GenArgs& a) {
    pisr::ScenarioOptions options;
    if (a.shm_form == "linear") {
        options.shm_form = pisr::ShmForm::Linear;
    } else if (a.shm_form != "sqrt") {
        throw ValidationError("--shm-form must be sqrt or linear");
    }
    const auto scenario = pisr::make_scenario(pisr::scenario_from_name(a.scenario), options);
    pisr::SamplingRanges ranges;
    ranges.n_samples = a.n;
    const pisr::NoiseSpec noise{a.noise_level, pisr::noise_target_from_name(a.noise_target)};
    const pisr::Dataset d = pisr::generate(scenario, ranges, noise, a.seed);
    pisr::write_dataset(d, a.out);
    std::cout << "wrote " << d.rows() << " rows to " << a.out << " (snr "
              << (std::isinf(d.snr_db) ? std::string("noiseless") : fmt(d.snr_db, "%.2f") + " dB") << ")\n";
    return kOk;
}

struct SearchArgs {
    std::string data;
    std::string preset = "pysr_like";
    std::string weights = "0.6,0.1,0.3";
    std::string critic = "null";
    std::string variant = "A";
    std::uint64_t seed = 0;
    std::string out;
    std::size_t population = 100;
    std::size_t generations = 50;
    std::size_t threads = 1;
    std::size_t critic_budget = 10;
    std::size_t patience = 3;
    bool table_rates = false;
    std::string model;
    std::string token_env;
    std::string cache;
    int timeout_ms = 30000;
    int retries = 2;
};

int cmd_search(const SearchArgs& a) {
    const pisr::Dataset d = pisr::read_dataset(a.data);
    pisr::EngineConfig cfg = pisr::preset_config(pisr::preset_from_name(a.preset), a.table_rates);
    cfg.weights = parse_weights(a.weights);
    cfg.population_size = a.population;
    cfg.generations = a.generations;
    cfg.threads = a.threads;
    cfg.critic_budget = a.critic_budget;
    cfg.early_stop.patience_generations = a.patience;
    cfg.seed = a.seed;
    const auto variant = pisr::variant_from_letter(a.variant);

    std::unique_ptr<pisr::Critic> critic;
    std::optional<pisr::ScenarioSpec> scenario;
    if (d.scenario) scenario = pisr::make_scenario(*d.scenario, d.options);
    if (a.critic == "null") {
        critic = std::make_unique<pisr::NullCritic>();
    } else if (a.critic == "mock") {
        if (!scenario) throw ValidationError("--critic mock needs a dataset whose sidecar names its scenario");
        critic = std::make_unique<pisr::MockCritic>(*scenario);
    } else {
        pisr::PromptContext ctx;
        if (scenario) {
            ctx = pisr::make_prompt_context(variant, *scenario);
        } else {
            ctx.variant = variant;
        }
        auto cache = a.cache.empty() ? std::make_shared<pisr::VerdictCache>()
                                     : std::make_shared<pisr::VerdictCache>(a.cache);
        critic = std::make_unique<pisr::LlmCritic>(
            endpoint_from(a.critic, a.model, a.token_env, a.timeout_ms, a.retries), ctx, d.schema, cache);
    }

    const pisr::SearchResult result = pisr::run(d, cfg, *critic);
    json doc = pisr::to_json(result, d.schema);
    doc["invocation"] = {{"data", a.data},       {"preset", a.preset},   {"weights", a.weights},
                         {"critic", a.critic},   {"variant", a.variant}, {"seed", a.seed},
                         {"table_rates", a.table_rates}};
    if (!a.out.empty()) {
        std::ofstream(a.out, std::ios::binary) << doc.dump(2) << '\n';
    }
    const auto& b = result.breakdown;
    std::cout << "best: y = " << pisr::render(result.best, d.schema) << "\n"
              << "L = " << fmt(b.L) << "  e = " << fmt(b.e) << "  s = " << fmt(b.s) << "  c = " << fmt(b.c)
              << (b.degenerate ? "  (degenerate)" : "") << "\n"
              << "generations: " << result.generations << (result.early_stopped ? " (early stop)" : "")
              << "  critic calls: " << result.critic.calls << "  critic failures: " << result.critic.failures
              << "\n";
    return kOk;
}

struct CompareArgs {
    std::string eq_a;
    std::string eq_b;
    std::string schema;
    double alpha = 0.5;
    bool raw = false;
};

int cmd_compare(const CompareArgs& a) {
    std::vector<std::string> names;
    if (!a.schema.empty()) {
        std::stringstream ss(a.schema);
        std::string part;
        while (std::getline(ss, part, ',')) names.push_back(part);
    } else {
        names = pisr::collect_identifiers(a.eq_a);
        for (const auto& n : pisr::collect_identifiers(a.eq_b)) {
            if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
        }
    }
    const pisr::VariableSchema schema(names);
    const auto ta = pisr::parse(a.eq_a, schema);
    const auto tb = pisr::parse(a.eq_b, schema);
    const pisr::TreeDistanceConfig cfg{a.alpha, !a.raw};
    std::cout << "distance: " << fmt(pisr::tree_distance(ta, tb, cfg)) << "\n"
              << "score: " << fmt(pisr::tree_score(ta, tb, cfg)) << "\n";
    return kOk;
}

struct CriticArgs {
    std::string eq;
    std::string variant = "A";
    std::string endpoint = "mock";
    std::string scenario;
    bool show_prompt = false;
    std::string model;
    std::string token_env;
    int timeout_ms = 30000;
    int retries = 2;
};

int cmd_critic(const CriticArgs& a) {
    const auto scenario = pisr::make_scenario(pisr::scenario_from_name(a.scenario));
    const auto tree = pisr::parse(a.eq, scenario.schema);
    const auto ctx = pisr::make_prompt_context(pisr::variant_from_letter(a.variant), scenario);
    if (a.show_prompt) {
        std::cout << pisr::build_prompt("y = " + pisr::render(tree, scenario.schema), ctx);
    }
    pisr::CriticVerdict v;
    if (a.endpoint == "mock") {
        v = pisr::mock_score(tree, scenario);
    } else {
        pisr::VerdictCache cache;
        v = pisr::score(tree, scenario.schema, ctx,
                        endpoint_from(a.endpoint, a.model, a.token_env, a.timeout_ms, a.retries), cache);
    }
    std::cout << "dim_corr = " << fmt(v.dim_corr) << "  simp = " << fmt(v.simp) << "  sim = " << fmt(v.sim)
              << "\nc = " << fmt(v.c) << "\nfeedback: " << v.feedback << "\n";
    if (v.clamped) std::cout << "note: scores were clamped into [0, 1]\n";
    if (v.extra_text) std::cout << "note: response carried extra text around the list\n";
    return kOk;
}

struct BenchArgs {
    std::string plan;
    std::string out_dir = "bench_out";
};

int cmd_bench(const BenchArgs& a) {
    const pisr::ExperimentPlan plan = pisr::load_plan(a.plan);
    const auto reports = pisr::run_plan(plan);
    const auto files = pisr::render_tables(reports, a.out_dir, !plan.noise_axis.empty());
    std::size_t failed = 0;
    for (const auto& r : reports) failed += r.ok() ? 0 : 1;
    std::cout << reports.size() << " reports, " << failed << " failed\n";
    for (const auto& f : files) std::cout << "  " << f.string() << "\n";
    return failed > 0 ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-informed symbolic regression toolkit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.fallthrough();
    std::string config;
    app.add_option("--config", config, "JSON file with default flag values");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
    g->add_option("--scenario", gen.scenario, "drop_ball, shm or em_wave")->required();
    g->add_option("--n", gen.n, "Number of rows")->capture_default_str();
    g->add_option("--noise-level", gen.noise_level, "Noise as a fraction of each column's std")->capture_default_str();
    g->add_option("--noise-target", gen.noise_target, "none, features, target or both")->capture_default_str();
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--out", gen.out, "Output CSV path")->required();
    g->add_option("--shm-form", gen.shm_form, "sqrt or linear angular frequency for shm")->capture_default_str();

    SearchArgs search;
    auto* s = app.add_subcommand("search", "Run a symbolic regression search on a dataset");
    s->add_option("--data", search.data, "Dataset CSV")->required();
    s->add_option("--preset", search.preset, "deap_like, gplearn_like or pysr_like")->capture_default_str();
    s->add_option("--weights", search.weights, "w1,w2,w3 summing to 1")->capture_default_str();
    s->add_option("--critic", search.critic, "null, mock or an endpoint URL")->capture_default_str();
    s->add_option("--variant", search.variant, "Prompt variant A..H")->capture_default_str();
    s->add_option("--seed", search.seed)->capture_default_str();
    s->add_option("--out", search.out, "SearchResult JSON path");
    s->add_option("--population", search.population)->capture_default_str();
    s->add_option("--generations", search.generations)->capture_default_str();
    s->add_option("--threads", search.threads)->capture_default_str();
    s->add_option("--critic-budget", search.critic_budget)->capture_default_str();
    s->add_option("--patience", search.patience, "Stalled generations before stopping (0 never stops)")
        ->capture_default_str();
    s->add_flag("--table-rates", search.table_rates, "Use the alternative deap_like genetic rates");
    s->add_option("--model", search.model, "Model name sent to the endpoint");
    s->add_option("--token-env", search.token_env, "Environment variable holding a bearer token");
    s->add_option("--cache", search.cache, "JSON-lines verdict cache file");
    s->add_option("--timeout-ms", search.timeout_ms)->capture_default_str();
    s->add_option("--retries", search.retries)->capture_default_str();

    CompareArgs compare;
    auto* c = app.add_subcommand("compare", "Expression tree distance and score between two equations");
    c->add_option("--eq-a", compare.eq_a)->required();
    c->add_option("--eq-b", compare.eq_b)->required();
    c->add_option("--schema", compare.schema, "Comma-separated variable names (default: inferred)");
    c->add_option("--alpha", compare.alpha, "Scale on differing constants")->capture_default_str();
    c->add_flag("--raw", compare.raw, "Score 1 - d without size normalization");

    CriticArgs critic;
    auto* k = app.add_subcommand("critic", "Score one equation with the mock critic or an LLM endpoint");
    k->add_option("--eq", critic.eq)->required();
    k->add_option("--variant", critic.variant)->capture_default_str();
    k->add_option("--endpoint", critic.endpoint, "mock or an endpoint URL")->capture_default_str();
    k->add_option("--scenario", critic.scenario)->required();
    k->add_flag("--show-prompt", critic.show_prompt, "Print the prompt before scoring");
    k->add_option("--model", critic.model);
    k->add_option("--token-env", critic.token_env);
    k->add_option("--timeout-ms", critic.timeout_ms)->capture_default_str();
    k->add_option("--retries", critic.retries)->capture_default_str();

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Execute an experiment plan");
    b->add_option("--plan", bench.plan, "Plan JSON file")->required();
    b->add_option("--out-dir", bench.out_dir)->capture_default_str();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        // Find --config and the subcommand name, then splice the config file's
        // values in right after the subcommand.
        std::string config_path;
        std::size_t sub_at = args.size();
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                config_path = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                config_path = args[i].substr(9);
            } else if (sub_at == args.size() &&
                       (args[i] == "gen" || args[i] == "search" || args[i] == "compare" || args[i] == "critic" ||
                        args[i] == "bench")) {
                sub_at = i;
            }
        }
        if (!config_path.empty() && sub_at < args.size()) {
            const auto extra = config_args(config_path, args[sub_at], app);
            args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, extra.begin(), extra.end());
        }
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*s) return cmd_search(search);
        if (*c) return cmd_compare(compare);
        if (*k) return cmd_critic(critic);
        if (*b) return cmd_bench(bench);
    } catch (const pisr::CriticError& e) {
        std::cerr << "critic error: " << e.what() << "\n";
        return kTransport;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kValidation;
}
