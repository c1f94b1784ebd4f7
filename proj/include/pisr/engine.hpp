#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pisr/critic.hpp"
#include "pisr/expression.hpp"
#include "pisr/physlab.hpp"

namespace pisr {

struct FitnessWeights {
    double w1 = 0.6;  // data fit
    double w2 = 0.1;  // size
    double w3 = 0.3;  // critic

    // Each weight in [0, 1], summing to 1 within 1e-9.
    void validate() const;
};

struct FitnessBreakdown {
    double e = 1.0;
    double s = 1.0;
    double c = 0.5;
    double L = 1.0;
    bool degenerate = false;
};

enum class InnerLoss { Squared, Huber };

enum class PresetId { DeapLike, GplearnLike, PysrLike };

std::string_view preset_name(PresetId id) noexcept;
PresetId preset_from_name(std::string_view name);

struct EarlyStop {
    double rel_improvement = 0.001;
    std::size_t patience_generations = 3;
};

struct EngineConfig {
    std::size_t population_size = 100;
    // Generation 0 (the initial population) counts as the first generation.
    std::size_t generations = 50;
    double crossover_prob = 0.7;
    double mutation_prob = 0.2;
    std::size_t tournament_size = 3;
    std::size_t max_depth = kDefaultDepthCap;
    std::size_t init_depth = 1;
    std::vector<Op> operator_set{Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow,
                                 Op::Neg, Op::Exp, Op::Log, Op::Sin, Op::Cos};
    FitnessWeights weights;
    EarlyStop early_stop;
    InnerLoss inner_loss = InnerLoss::Squared;
    double huber_delta = 1.0;
    std::size_t critic_budget = 10;
    std::size_t threads = 1;
    std::uint64_t seed = 0;
    // Replaces the first individuals of the initial population.
    std::vector<ExpressionTree> seed_population;

    void validate() const;
    std::size_t size_cap() const;
};

/// Operator set and genetic rates of one of the three emulated tools.
/// table_rates selects the alternative deap rates (0.05 / 0.01).
EngineConfig preset_config(PresetId id, bool table_rates = false);

double inner_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& y, InnerLoss kind, double delta);

/// Inner loss of the constant mean predictor; population variance of y for
/// the squared loss.
double loss_normalizer(const Eigen::VectorXd& y, InnerLoss kind, double delta);

FitnessBreakdown composite_loss(const ExpressionTree& tree, const Dataset& data, const FitnessWeights& weights,
                                std::optional<double> critic_c, const EngineConfig& cfg);

struct TracePoint {
    std::size_t generation = 0;
    double best_L = 1.0;
};

struct CriticStats {
    std::size_t calls = 0;
    std::size_t cache_hits = 0;
    std::size_t failures = 0;
    std::vector<std::string> incidents;
};

struct SearchResult {
    ExpressionTree best = ExpressionTree::constant(0.0);
    FitnessBreakdown breakdown;
    std::vector<TracePoint> trace;
    CriticStats critic;
    std::size_t generations = 0;
    bool early_stopped = false;
    EngineConfig config;
    std::uint64_t seed = 0;
};

SearchResult run(const Dataset& data, const EngineConfig& cfg, Critic& critic);

const std::vector<TracePoint>& best_trace(const SearchResult& result);

nlohmann::json to_json(const SearchResult& result, const VariableSchema& schema);
nlohmann::json to_json(const EngineConfig& cfg);

}  // namespace pisr
