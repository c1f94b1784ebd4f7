#pragma once

// Brute-force reference for the tree distance over binary trees: every
// internal pair tries every permutation of the child list that the operators
// allow, and keeps the cheapest.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "pisr/expression.hpp"

namespace pisr::oracle {

struct Tree {
    Op op;
    double value = 0.0;
    std::uint32_t var = 0;
    std::vector<Tree> kids;

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& k : kids) n += k.size();
        return n;
    }
};

inline Tree from(const ExpressionTree& t, std::size_t i = 0) {
    Tree out{t[i].op, t[i].value, t[i].var, {}};
    for (int k = 0; k < arity(t[i].op); ++k) out.kids.push_back(from(t, t.child(i, k)));
    return out;
}

inline double distance(const Tree& a, const Tree& b, double alpha) {
    if (a.kids.empty() && b.kids.empty()) {
        if (a.op != b.op) return 1.0;
        if (a.op == Op::Variable) return a.var == b.var ? 0.0 : 1.0;
        return std::min(1.0, alpha * std::fabs(a.value - b.value));
    }
    if (a.kids.empty()) return static_cast<double>(b.size());
    if (b.kids.empty()) return static_cast<double>(a.size());
    if (a.kids.size() != b.kids.size()) {
        throw std::logic_error("oracle only covers equal-arity internal pairs");
    }
    const bool may_permute = is_commutative(a.op) || is_commutative(b.op);
    std::vector<std::size_t> perm(b.kids.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double sum = a.op == b.op ? 0.0 : 1.0;
        for (std::size_t k = 0; k < perm.size(); ++k) sum += distance(a.kids[k], b.kids[perm[k]], alpha);
        best = std::min(best, sum);
    } while (may_permute && std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Every tree with at most max_nodes nodes over add, mul, x and constants {1, 2}.
inline std::vector<ExpressionTree> enumerate_small(std::size_t max_nodes) {
    std::vector<std::vector<ExpressionTree>> by_size(max_nodes + 1);
    by_size[1] = {build::var(0), build::num(1), build::num(2)};
    for (std::size_t n = 3; n <= max_nodes; n += 2) {
        for (std::size_t left = 1; left + 1 < n; left += 2) {
            const std::size_t right = n - 1 - left;
            for (Op op : {Op::Add, Op::Mul}) {
                for (const auto& l : by_size[left]) {
                    for (const auto& r : by_size[right]) by_size[n].push_back(ExpressionTree::binary(op, l, r));
                }
            }
        }
    }
    std::vector<ExpressionTree> all;
    for (auto& v : by_size) all.insert(all.end(), v.begin(), v.end());
    return all;
}

}  // namespace pisr::oracle
