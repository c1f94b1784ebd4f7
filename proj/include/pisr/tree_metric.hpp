#pragma once

#include "pisr/expression.hpp"

namespace pisr {

struct TreeDistanceConfig {
    double alpha = 0.5;     // scale on |v1 - v2| for differing constants
    bool normalize = true;  // divide by the larger tree size in tree_score

    void validate() const;
};

/// Structural distance between two expression trees.
///
/// Leaves: equal contents cost 0, differing variables (or a variable against a
/// constant) cost 1, differing constants cost min(alpha * |v1 - v2|, 1).
/// A leaf facing an internal node costs the internal subtree's node count.
/// Internal nodes cost 1 when their operators differ, plus the children's
/// distances; when either operator is add or mul the cheaper of the direct and
/// crossed child pairing is taken, otherwise children pair positionally.
/// Surplus children of a higher-arity node count their full size.
double tree_distance(const ExpressionTree& a, const ExpressionTree& b, const TreeDistanceConfig& cfg = {});

/// 1 - d (optionally divided by the larger size), clamped to [0, 1].
double tree_score(const ExpressionTree& a, const ExpressionTree& b, const TreeDistanceConfig& cfg = {});

}  // namespace pisr
