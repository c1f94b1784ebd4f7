#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pisr/critic.hpp"
#include "pisr/engine.hpp"
#include "pisr/physlab.hpp"

namespace pisr {

struct FitMetrics {
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
};

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// MAE, MSE and R^2 of pred against truth. Needs at least two samples and a
/// truth vector with non-zero variance.
FitMetrics fit_metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

enum class CriticKind { Null, Mock, Llm };

struct CriticSpec {
    CriticKind kind = CriticKind::Null;
    PromptVariant variant = PromptVariant::A;
    std::string label;  // column name in the tables
    LlmEndpoint endpoint;
};

struct NoisePoint {
    NoiseTarget target = NoiseTarget::Target;
    double level = 0.01;
};

class PlanError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentPlan {
    std::vector<ScenarioId> scenarios;
    std::vector<PresetId> presets;
    std::vector<CriticSpec> critics;
    // Empty: every cell uses the default 1% target noise.
    std::vector<NoisePoint> noise_axis;
    std::size_t repeats = 3;
    std::uint64_t base_seed = 0;

    std::optional<std::size_t> population_size;
    std::optional<std::size_t> generations;
    std::optional<FitnessWeights> weights;
    std::optional<std::size_t> critic_budget;
    std::size_t threads = 1;
    std::size_t n_samples = 500;
    std::size_t holdout_samples = 500;
    std::optional<std::filesystem::path> critic_cache;

    void validate() const;
};

/// Throws PlanError naming the first missing or malformed field.
ExperimentPlan parse_plan(const nlohmann::json& doc);
ExperimentPlan load_plan(const std::filesystem::path& path);

struct RunReport {
    std::string scenario;
    std::string preset;
    std::string critic;
    char variant = 'A';
    std::string noise_target;
    double noise_level = 0.0;
    std::size_t repeat = 0;

    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    double tree_score = 0.0;
    std::string best_equation;
    std::size_t generations_used = 0;
    std::size_t critic_calls = 0;
    std::size_t critic_failures = 0;
    double wall_time = 0.0;  // seconds; kept out of reports.jsonl
    std::optional<std::string> failure;
    std::uint64_t data_seed = 0;
    std::uint64_t engine_seed = 0;

    std::string key() const;
    bool ok() const noexcept { return !failure.has_value(); }
};

nlohmann::json to_json(const RunReport& report);

/// Runs every scenario x preset x critic x noise point x repeat cell. A
/// failing cell yields a report with `failure` set and never stops the rest.
std::vector<RunReport> run_plan(const ExperimentPlan& plan);

/// Writes reports.jsonl (sorted by cell key), timings.csv, the pivot CSVs and
/// summary.txt into out_dir and returns the written paths. noise_experiment
/// selects the noise pivot instead of the benchmark and prompt pivots.
std::vector<std::filesystem::path> render_tables(std::vector<RunReport> reports,
                                                 const std::filesystem::path& out_dir, bool noise_experiment);

}  // namespace pisr
