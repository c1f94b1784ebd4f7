#pragma once

#include <vector>

#include "pisr/expression.hpp"
#include "pisr/random.hpp"

namespace pisr::testing {

// Random tree over variables 0..n_vars-1 with small integer-ish constants.
inline void random_nodes(std::vector<Node>& out, Rng& rng, int depth, std::uint32_t n_vars,
                         const std::vector<Op>& ops) {
    if (depth == 0 || rng.chance(0.3)) {
        if (n_vars > 0 && rng.chance(0.6)) {
            out.push_back(Node{Op::Variable, 0.0, static_cast<std::uint32_t>(rng.below(n_vars))});
        } else {
            out.push_back(Node{Op::Constant, static_cast<double>(rng.below(7)) - 3.0 + 0.5 * rng.uniform(), 0});
        }
        return;
    }
    const Op op = ops[rng.below(ops.size())];
    out.push_back(Node{op, 0.0, 0});
    for (int k = 0; k < arity(op); ++k) random_nodes(out, rng, depth - 1, n_vars, ops);
}

inline ExpressionTree random_tree(Rng& rng, int depth, std::uint32_t n_vars, const std::vector<Op>& ops) {
    std::vector<Node> nodes;
    random_nodes(nodes, rng, depth, n_vars, ops);
    return ExpressionTree(std::move(nodes));
}

inline const std::vector<Op>& all_ops() {
    static const std::vector<Op> ops{Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow,
                                     Op::Neg, Op::Exp, Op::Log, Op::Sin, Op::Cos};
    return ops;
}

// Recursively swaps the children of commutative nodes where the coin says so.
inline ExpressionTree shuffle_commutative(const ExpressionTree& t, std::size_t i, Rng& rng) {
    const Node& n = t[i];
    switch (arity(n.op)) {
    case 0:
        return t.subtree(i);
    case 1:
        return ExpressionTree::unary(n.op, shuffle_commutative(t, i + 1, rng));
    default: {
        auto l = shuffle_commutative(t, i + 1, rng);
        auto r = shuffle_commutative(t, t.child(i, 1), rng);
        if (is_commutative(n.op) && rng.chance(0.5)) std::swap(l, r);
        return ExpressionTree::binary(n.op, l, r);
    }
    }
}

}  // namespace pisr::testing
