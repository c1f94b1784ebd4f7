#include "pisr/tree_metric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pisr {

void TreeDistanceConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("tree distance alpha must lie in [0, 1]");
    }
}

namespace {

struct Walker {
    const ExpressionTree& a;
    const ExpressionTree& b;
    double alpha;

    double leaf_pair(const Node& x, const Node& y) const {
        if (x.op != y.op) {
            return 1.0;
        }
        if (x.op == Op::Variable) {
            return x.var == y.var ? 0.0 : 1.0;
        }
        if (x.value == y.value) {
            return 0.0;
        }
        return std::min(alpha * std::abs(x.value - y.value), 1.0);
    }

    double at(std::size_t i, std::size_t j) const {
        const Node& x = a[i];
        const Node& y = b[j];
        const int ax = arity(x.op);
        const int ay = arity(y.op);
        if (ax == 0 && ay == 0) {
            return leaf_pair(x, y);
        }
        if (ax == 0) {
            return static_cast<double>(b.subtree_end(j) - j);
        }
        if (ay == 0) {
            return static_cast<double>(a.subtree_end(i) - i);
        }

        const double op_cost = x.op == y.op ? 0.0 : 1.0;
        if (ax == 1 && ay == 1) {
            return op_cost + at(i + 1, j + 1);
        }
        if (ax == 2 && ay == 2) {
            const std::size_t a1 = a.child(i, 1);
            const std::size_t b1 = b.child(j, 1);
            const double direct = at(i + 1, j + 1) + at(a1, b1);
            if (!is_commutative(x.op) && !is_commutative(y.op)) {
                return op_cost + direct;
            }
            const double cross = at(i + 1, b1) + at(a1, j + 1);
            return op_cost + std::min(direct, cross);
        }
        // Unary against binary: the single child pairs with either operand
        // (or only the first when the binary operator is not commutative),
        // the other operand is unmatched.
        const bool a_unary = ax == 1;
        const std::size_t u = a_unary ? i + 1 : j + 1;
        const std::size_t p = a_unary ? j : i;
        const ExpressionTree& bt = a_unary ? b : a;
        const std::size_t first = p + 1;
        const std::size_t second = bt.child(p, 1);
        const double size_first = static_cast<double>(second - first);
        const double size_second = static_cast<double>(bt.subtree_end(second) - second);
        auto pair = [&](std::size_t k) { return a_unary ? at(u, k) : at(k, u); };
        double best = pair(first) + size_second;
        if (is_commutative(bt[p].op)) {
            best = std::min(best, pair(second) + size_first);
        }
        return 1.0 + best;
    }
};

}  // namespace

double tree_distance(const ExpressionTree& a, const ExpressionTree& b, const TreeDistanceConfig& cfg) {
    cfg.validate();
    return Walker{a, b, cfg.alpha}.at(0, 0);
}

double tree_score(const ExpressionTree& a, const ExpressionTree& b, const TreeDistanceConfig& cfg) {
    double d = tree_distance(a, b, cfg);
    if (cfg.normalize) {
        d /= static_cast<double>(std::max(a.size(), b.size()));
    }
    return std::clamp(1.0 - d, 0.0, 1.0);
}

}  // namespace pisr
