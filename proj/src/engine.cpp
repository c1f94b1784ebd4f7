#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "pisr/engine.hpp"
#include "pisr/random.hpp"

namespace pisr {

namespace {

constexpr double kVariableShare = 0.75;
constexpr double kErcLo = -5.0;
constexpr double kErcHi = 5.0;
constexpr double kInternalPick = 0.9;
constexpr std::size_t kMutationDepth = 4;

struct Individual {
    ExpressionTree tree = ExpressionTree::constant(0.0);
    std::string key;
    FitnessBreakdown fit;
};

class TreeFactory {
public:
    TreeFactory(const EngineConfig& cfg, std::size_t n_vars) : n_vars_(n_vars) {
        for (Op op : cfg.operator_set) {
            (arity(op) == 1 ? unary_ : binary_).push_back(op);
        }
        ops_ = cfg.operator_set;
        const double terminals = static_cast<double>(n_vars_ + 1);
        p_terminal_ = terminals / (terminals + static_cast<double>(ops_.size()));
    }

    ExpressionTree make(Rng& rng, std::size_t depth, bool full) const {
        std::vector<Node> nodes;
        grow(nodes, rng, depth, full, true);
        return ExpressionTree(std::move(nodes));
    }

    Node terminal(Rng& rng) const {
        if (n_vars_ > 0 && rng.chance(kVariableShare)) {
            return Node{Op::Variable, 0.0, static_cast<std::uint32_t>(rng.below(n_vars_))};
        }
        return Node{Op::Constant, rng.uniform(kErcLo, kErcHi), 0};
    }

    // Another operator of the same arity, or op itself when there is none.
    Op swap_operator(Op op, Rng& rng) const {
        const auto& pool = arity(op) == 1 ? unary_ : binary_;
        if (pool.size() < 2) return op;
        Op pick = op;
        while (pick == op) pick = pool[rng.below(pool.size())];
        return pick;
    }

    std::size_t n_vars() const { return n_vars_; }

private:
    void grow(std::vector<Node>& out, Rng& rng, std::size_t depth, bool full, bool root) const {
        if (depth == 0 || (!full && !root && rng.chance(p_terminal_))) {
            out.push_back(terminal(rng));
            return;
        }
        const Op op = ops_[rng.below(ops_.size())];
        out.push_back(Node{op, 0.0, 0});
        for (int k = 0; k < arity(op); ++k) {
            grow(out, rng, depth - 1, full, false);
        }
    }

    std::size_t n_vars_;
    std::vector<Op> ops_;
    std::vector<Op> unary_;
    std::vector<Op> binary_;
    double p_terminal_ = 0.5;
};

std::size_t pick_node(const ExpressionTree& t, Rng& rng) {
    if (t.size() > 1 && rng.chance(kInternalPick)) {
        std::vector<std::size_t> internal;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!is_leaf(t[i].op)) internal.push_back(i);
        }
        return internal[rng.below(internal.size())];
    }
    return rng.below(t.size());
}

class Search {
public:
    Search(const Dataset& data, const EngineConfig& cfg, Critic& critic)
        : data_(data), cfg_(cfg), critic_(critic),
          factory_(cfg, static_cast<std::size_t>(data.X.cols())),
          normalizer_(loss_normalizer(data.y, cfg.inner_loss, cfg.huber_delta)) {}

    SearchResult run() {
        SearchResult result;
        result.config = cfg_;
        result.seed = cfg_.seed;

        std::vector<Individual> pop = initial_population();
        score_generation(pop);
        std::size_t best = leader(pop);
        result.trace.push_back({0, pop[best].fit.L});

        std::size_t stalled = 0;
        for (std::size_t g = 1; g < cfg_.generations; ++g) {
            pop = next_generation(pop, best, g);
            score_generation(pop);
            best = leader(pop);
            const double prev = result.trace.back().best_L;
            const double cur = pop[best].fit.L;
            result.trace.push_back({g, cur});

            const double rel = prev > 0.0 ? (prev - cur) / prev : 0.0;
            stalled = rel < cfg_.early_stop.rel_improvement ? stalled + 1 : 0;
            if (cfg_.early_stop.patience_generations > 0 && stalled >= cfg_.early_stop.patience_generations) {
                result.early_stopped = true;
                break;
            }
        }

        result.best = pop[best].tree;
        result.breakdown = pop[best].fit;
        result.generations = result.trace.size();
        result.critic = std::move(stats_);
        return result;
    }

private:
    std::vector<Individual> initial_population() {
        const std::size_t n = cfg_.population_size;
        const std::size_t ramps = cfg_.max_depth - cfg_.init_depth + 1;
        std::vector<Individual> pop(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (i < cfg_.seed_population.size()) {
                pop[i].tree = cfg_.seed_population[i];
                if (pop[i].tree.arity_required() > factory_.n_vars()) {
                    throw SchemaError("seed_population tree references a variable outside the dataset");
                }
                continue;
            }
            Rng rng(derive_seed({cfg_.seed, 0, i}));
            const std::size_t depth = cfg_.init_depth + (i / 2) % ramps;
            pop[i].tree = factory_.make(rng, depth, i % 2 == 0);
        }
        return pop;
    }

    std::size_t tournament(const std::vector<Individual>& pop, Rng& rng) const {
        std::size_t winner = rng.below(pop.size());
        for (std::size_t k = 1; k < cfg_.tournament_size; ++k) {
            const std::size_t c = rng.below(pop.size());
            if (better(pop, c, winner)) winner = c;
        }
        return winner;
    }

    static bool better(const std::vector<Individual>& pop, std::size_t a, std::size_t b) {
        const auto& x = pop[a];
        const auto& y = pop[b];
        if (x.fit.L != y.fit.L) return x.fit.L < y.fit.L;
        if (x.tree.size() != y.tree.size()) return x.tree.size() < y.tree.size();
        return a < b;
    }

    ExpressionTree crossover(const ExpressionTree& a, const ExpressionTree& b, Rng& rng) const {
        const std::size_t i = pick_node(a, rng);
        const std::size_t j = pick_node(b, rng);
        ExpressionTree child = a.replace_subtree(i, b.subtree(j));
        return child.depth() <= cfg_.max_depth ? child : a;
    }

    ExpressionTree mutate(const ExpressionTree& t, Rng& rng) const {
        const std::size_t i = rng.below(t.size());
        if (rng.chance(0.5)) {
            const std::size_t depth = rng.below(std::min(kMutationDepth, cfg_.max_depth) + 1);
            ExpressionTree child = t.replace_subtree(i, factory_.make(rng, depth, false));
            return child.depth() <= cfg_.max_depth ? child : t;
        }
        std::vector<Node> nodes(t.nodes().begin(), t.nodes().end());
        Node& n = nodes[i];
        switch (n.op) {
        case Op::Constant:
            n.value += rng.normal(0.0, 0.1 * std::max(1.0, std::abs(n.value)));
            break;
        case Op::Variable:
            n = factory_.terminal(rng);
            break;
        default:
            n.op = factory_.swap_operator(n.op, rng);
            break;
        }
        return ExpressionTree(std::move(nodes));
    }

    std::vector<Individual> next_generation(const std::vector<Individual>& pop, std::size_t elite, std::size_t g) {
        std::vector<Individual> next(pop.size());
        next[0] = pop[elite];
        for (std::size_t i = 1; i < pop.size(); ++i) {
            Rng rng(derive_seed({cfg_.seed, g, i}));
            const std::size_t p1 = tournament(pop, rng);
            ExpressionTree child = pop[p1].tree;
            if (rng.chance(cfg_.crossover_prob)) {
                const std::size_t p2 = tournament(pop, rng);
                child = crossover(child, pop[p2].tree, rng);
            }
            if (rng.chance(cfg_.mutation_prob)) {
                child = mutate(child, rng);
            }
            next[i].tree = std::move(child);
        }
        return next;
    }

    void fit_one(Individual& ind) const {
        FitnessBreakdown& b = ind.fit;
        b = FitnessBreakdown{};
        b.s = std::min(1.0, static_cast<double>(ind.tree.size()) / static_cast<double>(cfg_.size_cap()));
        const BatchEvaluation eval = evaluate(ind.tree, data_.X);
        if (eval.degenerate) {
            b.degenerate = true;
            return;
        }
        const double loss = inner_loss(eval.values, data_.y, cfg_.inner_loss, cfg_.huber_delta);
        double e = normalizer_ > 0.0 ? loss / normalizer_ : (loss == 0.0 ? 0.0 : 1.0);
        b.e = std::isfinite(e) ? std::clamp(e, 0.0, 1.0) : 1.0;
    }

    void assemble(Individual& ind) const {
        FitnessBreakdown& b = ind.fit;
        if (b.degenerate) {
            b.e = 1.0;
            b.L = 1.0;
            return;
        }
        const auto it = verdicts_.find(ind.key);
        b.c = it != verdicts_.end() ? it->second : 0.5;
        const FitnessWeights& w = cfg_.weights;
        b.L = w.w1 * b.e + w.w2 * b.s + w.w3 * b.c;
    }

    void evaluate_all(std::vector<Individual>& pop) const {
        const std::size_t workers = std::max<std::size_t>(1, std::min(cfg_.threads, pop.size()));
        if (workers == 1) {
            for (auto& ind : pop) fit_one(ind);
            return;
        }
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < pop.size(); i += workers) fit_one(pop[i]);
            });
        }
        for (auto& t : pool) t.join();
    }

    void consult(const Individual& ind) {
        ++stats_.calls;
        double c = 0.5;
        try {
            c = critic_.score(ind.tree).c;
        } catch (const CriticError& err) {
            ++stats_.failures;
            stats_.incidents.push_back(err.what());
        }
        verdicts_[ind.key] = c;
    }

    void score_generation(std::vector<Individual>& pop) {
        for (auto& ind : pop) ind.key = canonical_key(ind.tree);
        evaluate_all(pop);
        if (critic_.is_null()) {
            for (auto& ind : pop) assemble(ind);
            return;
        }

        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            if (!pop[i].fit.degenerate) order.push_back(i);
        }
        const FitnessWeights& w = cfg_.weights;
        auto partial = [&](std::size_t i) { return w.w1 * pop[i].fit.e + w.w2 * pop[i].fit.s; };
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double pa = partial(a);
            const double pb = partial(b);
            if (pa != pb) return pa < pb;
            return pop[a].tree.size() < pop[b].tree.size();
        });

        std::vector<std::string> seen;
        for (std::size_t i : order) {
            if (seen.size() >= cfg_.critic_budget) break;
            if (std::find(seen.begin(), seen.end(), pop[i].key) != seen.end()) continue;
            seen.push_back(pop[i].key);
            if (verdicts_.count(pop[i].key)) {
                ++stats_.cache_hits;
            } else {
                consult(pop[i]);
            }
        }
        for (auto& ind : pop) assemble(ind);

        // The reported leader always carries a real verdict, which keeps the
        // per-generation best loss comparable across generations.
        for (;;) {
            const std::size_t b = leader(pop);
            if (pop[b].fit.degenerate || verdicts_.count(pop[b].key)) break;
            consult(pop[b]);
            for (auto& ind : pop) {
                if (ind.key == pop[b].key) assemble(ind);
            }
        }
    }

    std::size_t leader(const std::vector<Individual>& pop) const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pop.size(); ++i) {
            if (better(pop, i, best)) best = i;
        }
        return best;
    }

    const Dataset& data_;
    const EngineConfig& cfg_;
    Critic& critic_;
    TreeFactory factory_;
    double normalizer_;
    std::unordered_map<std::string, double> verdicts_;
    CriticStats stats_;
};

}  // namespace

SearchResult run(const Dataset& data, const EngineConfig& cfg, Critic& critic) {
    cfg.validate();
    if (data.y.size() == 0 || data.X.rows() != data.y.size()) {
        throw DatasetError("search needs a non-empty dataset with matching X and y");
    }
    return Search(data, cfg, critic).run();
}

const std::vector<TracePoint>& best_trace(const SearchResult& result) { return result.trace; }

nlohmann::json to_json(const SearchResult& result, const VariableSchema& schema) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : result.trace) {
        trace.push_back({{"generation", p.generation}, {"best_L", p.best_L}});
    }
    const FitnessBreakdown& b = result.breakdown;
    return {
        {"best_expression", render(result.best, schema)},
        {"breakdown", {{"e", b.e}, {"s", b.s}, {"c", b.c}, {"L", b.L}, {"degenerate", b.degenerate}}},
        {"trace", trace},
        {"generations", result.generations},
        {"early_stopped", result.early_stopped},
        {"critic",
         {{"calls", result.critic.calls},
          {"cache_hits", result.critic.cache_hits},
          {"failures", result.critic.failures},
          {"incidents", result.critic.incidents}}},
        {"config", to_json(result.config)},
        {"seed", result.seed},
    };
}

}  // namespace pisr
