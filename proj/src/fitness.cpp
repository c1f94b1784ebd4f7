#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pisr/engine.hpp"

namespace pisr {

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

}  // namespace

void FitnessWeights::validate() const {
    if (!is_probability(w1) || !is_probability(w2) || !is_probability(w3)) {
        throw std::invalid_argument("fitness weights must each lie in [0, 1]");
    }
    if (std::abs(w1 + w2 + w3 - 1.0) > 1e-9) {
        throw std::invalid_argument("fitness weights must sum to 1");
    }
}

std::string_view preset_name(PresetId id) noexcept {
    switch (id) {
    case PresetId::DeapLike: return "deap_like";
    case PresetId::GplearnLike: return "gplearn_like";
    default: return "pysr_like";
    }
}

PresetId preset_from_name(std::string_view name) {
    if (name == "deap_like") return PresetId::DeapLike;
    if (name == "gplearn_like") return PresetId::GplearnLike;
    if (name == "pysr_like") return PresetId::PysrLike;
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

EngineConfig preset_config(PresetId id, bool table_rates) {
    EngineConfig cfg;
    switch (id) {
    case PresetId::DeapLike:
        cfg.operator_set = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Neg, Op::Log, Op::Sin, Op::Cos};
        cfg.crossover_prob = table_rates ? 0.05 : 0.6;
        cfg.mutation_prob = table_rates ? 0.01 : 0.05;
        break;
    case PresetId::GplearnLike:
        cfg.operator_set = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Neg, Op::Exp, Op::Log, Op::Sin, Op::Cos};
        cfg.crossover_prob = 0.9;
        cfg.mutation_prob = 0.1;
        break;
    case PresetId::PysrLike:
        cfg.operator_set = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow,
                            Op::Neg, Op::Exp, Op::Log, Op::Sin, Op::Cos};
        cfg.inner_loss = InnerLoss::Huber;
        cfg.crossover_prob = 0.7;
        cfg.mutation_prob = 0.3;
        break;
    }
    return cfg;
}

void EngineConfig::validate() const {
    if (!is_probability(crossover_prob) || !is_probability(mutation_prob)) {
        throw std::invalid_argument("crossover and mutation probabilities must lie in [0, 1]");
    }
    if (population_size < 2) {
        throw std::invalid_argument("population_size must be at least 2");
    }
    if (generations < 1) {
        throw std::invalid_argument("generations must be at least 1");
    }
    if (tournament_size < 1) {
        throw std::invalid_argument("tournament_size must be at least 1");
    }
    if (operator_set.empty()) {
        throw std::invalid_argument("operator_set must not be empty");
    }
    for (Op op : operator_set) {
        if (is_leaf(op)) {
            throw std::invalid_argument("operator_set may only hold operators, not leaves");
        }
    }
    if (max_depth > 20) {
        throw std::invalid_argument("max_depth above 20 is not supported");
    }
    if (init_depth > max_depth) {
        throw std::invalid_argument("init_depth must not exceed max_depth");
    }
    if (!(huber_delta > 0.0)) {
        throw std::invalid_argument("huber_delta must be positive");
    }
    if (!std::isfinite(early_stop.rel_improvement) || early_stop.rel_improvement < 0.0) {
        throw std::invalid_argument("early_stop.rel_improvement must be non-negative");
    }
    weights.validate();
    for (const auto& t : seed_population) {
        if (t.depth() > max_depth) {
            throw std::invalid_argument("seed_population tree exceeds max_depth");
        }
    }
}

std::size_t EngineConfig::size_cap() const { return (std::size_t{1} << (max_depth + 1)) - 1; }

double inner_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& y, InnerLoss kind, double delta) {
    if (pred.size() != y.size() || y.size() == 0) {
        throw std::invalid_argument("inner_loss needs equal, non-empty vectors");
    }
    const Eigen::ArrayXd r = (pred - y).array();
    if (kind == InnerLoss::Squared) {
        return r.square().mean();
    }
    const Eigen::ArrayXd a = r.abs();
    return (a <= delta).select(0.5 * r.square(), delta * (a - 0.5 * delta)).mean();
}

double loss_normalizer(const Eigen::VectorXd& y, InnerLoss kind, double delta) {
    const Eigen::VectorXd mean = Eigen::VectorXd::Constant(y.size(), y.mean());
    return inner_loss(mean, y, kind, delta);
}

FitnessBreakdown composite_loss(const ExpressionTree& tree, const Dataset& data, const FitnessWeights& weights,
                                std::optional<double> critic_c, const EngineConfig& cfg) {
    weights.validate();
    if (critic_c && !is_probability(*critic_c)) {
        throw std::invalid_argument("critic_c must lie in [0, 1]");
    }
    if (data.y.size() == 0) {
        throw std::invalid_argument("composite_loss needs a non-empty dataset");
    }
    if (tree.arity_required() > static_cast<std::size_t>(data.X.cols())) {
        throw SchemaError("tree references a variable outside the dataset schema");
    }
    FitnessBreakdown b;
    b.s = std::min(1.0, static_cast<double>(tree.size()) / static_cast<double>(cfg.size_cap()));
    b.c = critic_c.value_or(0.5);

    const BatchEvaluation eval = evaluate(tree, data.X);
    if (eval.degenerate) {
        b.degenerate = true;
        b.e = 1.0;
        b.L = 1.0;
        return b;
    }
    const double loss = inner_loss(eval.values, data.y, cfg.inner_loss, cfg.huber_delta);
    const double norm = loss_normalizer(data.y, cfg.inner_loss, cfg.huber_delta);
    if (norm > 0.0) {
        b.e = std::clamp(loss / norm, 0.0, 1.0);
    } else {
        b.e = loss == 0.0 ? 0.0 : 1.0;
    }
    if (!std::isfinite(b.e)) {
        b.e = 1.0;
    }
    b.L = weights.w1 * b.e + weights.w2 * b.s + weights.w3 * b.c;
    return b;
}

nlohmann::json to_json(const EngineConfig& cfg) {
    nlohmann::json ops = nlohmann::json::array();
    for (Op op : cfg.operator_set) ops.push_back(std::string(op_name(op)));
    return {
        {"population_size", cfg.population_size},
        {"generations", cfg.generations},
        {"crossover_prob", cfg.crossover_prob},
        {"mutation_prob", cfg.mutation_prob},
        {"tournament_size", cfg.tournament_size},
        {"max_depth", cfg.max_depth},
        {"init_depth", cfg.init_depth},
        {"operator_set", ops},
        {"weights", {cfg.weights.w1, cfg.weights.w2, cfg.weights.w3}},
        {"early_stop",
         {{"rel_improvement", cfg.early_stop.rel_improvement},
          {"patience_generations", cfg.early_stop.patience_generations}}},
        {"inner_loss", cfg.inner_loss == InnerLoss::Squared ? "squared" : "huber"},
        {"huber_delta", cfg.huber_delta},
        {"critic_budget", cfg.critic_budget},
        {"threads", cfg.threads},
        {"seed", cfg.seed},
    };
}

}  // namespace pisr
