#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace pisr {

// Operator universe shared by every engine preset.
enum class Op : std::uint8_t {
    Constant,
    Variable,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
};

inline constexpr std::size_t kDefaultDepthCap = 8;
inline constexpr double kProtectEps = 1e-9;
inline constexpr double kPowClamp = 1e12;

int arity(Op op) noexcept;
bool is_commutative(Op op) noexcept;
bool is_leaf(Op op) noexcept;
std::string_view op_name(Op op) noexcept;
// Inverse of op_name for the ten operator tags ("add", "cos", ...).
Op op_from_name(std::string_view name);

struct Node {
    Op op = Op::Constant;
    double value = 0.0;       // Constant only
    std::uint32_t var = 0;    // Variable only

    friend bool operator==(const Node&, const Node&) = default;
};

class TreeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Immutable expression tree stored as a prefix-ordered node array.
///
/// Children of node i start at i + 1; the second child of a binary node
/// starts at subtree_end(i + 1). Structural equality is element-wise
/// equality of the node arrays.
class ExpressionTree {
public:
    /// Validates arity and constant finiteness; throws TreeError otherwise.
    explicit ExpressionTree(std::vector<Node> prefix);

    static ExpressionTree constant(double value);
    static ExpressionTree variable(std::uint32_t index);
    static ExpressionTree unary(Op op, const ExpressionTree& child);
    static ExpressionTree binary(Op op, const ExpressionTree& lhs, const ExpressionTree& rhs);

    std::span<const Node> nodes() const noexcept { return nodes_; }
    const Node& operator[](std::size_t i) const { return nodes_[i]; }
    const Node& root() const noexcept { return nodes_.front(); }

    std::size_t size() const noexcept { return nodes_.size(); }
    // Edges on the longest root-to-leaf path; a single leaf has depth 0.
    std::size_t depth() const;

    // One past the last node of the subtree rooted at i.
    std::size_t subtree_end(std::size_t i) const;
    // Index of child k (0-based) of node i.
    std::size_t child(std::size_t i, int k) const;

    ExpressionTree subtree(std::size_t i) const;
    ExpressionTree replace_subtree(std::size_t i, const ExpressionTree& with) const;

    // Largest variable index + 1, or 0 for variable-free trees.
    std::size_t arity_required() const;

    friend bool operator==(const ExpressionTree&, const ExpressionTree&) = default;

private:
    struct Unchecked {};
    ExpressionTree(std::vector<Node> prefix, Unchecked) : nodes_(std::move(prefix)) {}

    std::vector<Node> nodes_;
};

inline std::size_t size(const ExpressionTree& tree) noexcept { return tree.size(); }
inline std::size_t depth(const ExpressionTree& tree) { return tree.depth(); }

class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct VariableSchema {
    std::vector<std::string> names;
    std::vector<std::string> units;
    std::vector<std::string> descriptions;

    VariableSchema() = default;
    // Units and descriptions default to empty strings.
    explicit VariableSchema(std::vector<std::string> names_);
    VariableSchema(std::vector<std::string> names_, std::vector<std::string> units_,
                   std::vector<std::string> descriptions_);

    std::size_t size() const noexcept { return names.size(); }
    // -1 when absent.
    int index_of(std::string_view name) const noexcept;
    void validate() const;

    friend bool operator==(const VariableSchema&, const VariableSchema&) = default;
};

// Protected scalar primitives; shared by row and batch evaluation so both
// paths agree bit-for-bit.
double protected_div(double a, double b) noexcept;
double protected_log(double a) noexcept;
double clamped_pow(double a, double b) noexcept;

struct Evaluation {
    double value = 0.0;
    bool degenerate = false;   // a non-finite value occurred; value is 0.0
};

Evaluation evaluate(const ExpressionTree& tree, std::span<const double> row);

struct BatchEvaluation {
    Eigen::VectorXd values;    // non-finite entries replaced by 0.0
    bool degenerate = false;
};

// Evaluates every row of X (n x m).
BatchEvaluation evaluate(const ExpressionTree& tree, const Eigen::MatrixXd& X);

/// Fully parenthesized infix rendering. Constants use the shortest decimal
/// form that reads back to the same double.
std::string render(const ExpressionTree& tree, const VariableSchema& schema);

/// Key equal for trees that agree up to reordering of add/mul children.
std::string canonical_key(const ExpressionTree& tree);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t position);
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class UnknownIdentifierError : public ParseError {
public:
    UnknownIdentifierError(std::string identifier, std::size_t position);
    const std::string& identifier() const noexcept { return identifier_; }

private:
    std::string identifier_;
};

ExpressionTree parse(std::string_view text, const VariableSchema& schema);

// Identifiers in order of first appearance, excluding function names.
std::vector<std::string> collect_identifiers(std::string_view text);

// Shorthand constructors, mostly for tests and ground-truth definitions.
namespace build {
ExpressionTree num(double v);
ExpressionTree var(std::uint32_t i);
ExpressionTree add(const ExpressionTree& a, const ExpressionTree& b);
ExpressionTree sub(const ExpressionTree& a, const ExpressionTree& b);
ExpressionTree mul(const ExpressionTree& a, const ExpressionTree& b);
ExpressionTree div(const ExpressionTree& a, const ExpressionTree& b);
ExpressionTree pow(const ExpressionTree& a, const ExpressionTree& b);
ExpressionTree neg(const ExpressionTree& a);
ExpressionTree exp(const ExpressionTree& a);
ExpressionTree log(const ExpressionTree& a);
ExpressionTree sin(const ExpressionTree& a);
ExpressionTree cos(const ExpressionTree& a);
}  // namespace build

}  // namespace pisr
