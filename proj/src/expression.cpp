#include "pisr/expression.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unordered_set>

namespace pisr {

namespace {

constexpr std::array<std::string_view, 12> kOpNames = {
    "const", "var", "add", "sub", "mul", "div", "pow", "neg", "exp", "log", "sin", "cos",
};

std::string format_number(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Fewest significant digits that read back as exactly v.
std::string shortest_number(double v) {
    for (int digits = 1; digits < 17; ++digits) {
        std::string s = format_number(v, digits);
        if (std::strtod(s.c_str(), nullptr) == v) return s;
    }
    return format_number(v, 17);
}

}  // namespace

int arity(Op op) noexcept {
    switch (op) {
    case Op::Constant:
    case Op::Variable:
        return 0;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
        return 2;
    default:
        return 1;
    }
}

bool is_commutative(Op op) noexcept { return op == Op::Add || op == Op::Mul; }

bool is_leaf(Op op) noexcept { return arity(op) == 0; }

std::string_view op_name(Op op) noexcept { return kOpNames[static_cast<std::size_t>(op)]; }

Op op_from_name(std::string_view name) {
    for (std::size_t i = 2; i < kOpNames.size(); ++i) {
        if (kOpNames[i] == name) {
            return static_cast<Op>(i);
        }
    }
    throw TreeError("unknown operator '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ExpressionTree

ExpressionTree::ExpressionTree(std::vector<Node> prefix) : nodes_(std::move(prefix)) {
    if (nodes_.empty()) {
        throw TreeError("expression tree must contain at least one node");
    }
    // Walk the prefix array counting open child slots.
    std::size_t open = 1;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (open == 0) {
            throw TreeError("trailing nodes after a complete expression");
        }
        const Node& n = nodes_[i];
        if (static_cast<std::size_t>(n.op) >= kOpNames.size()) {
            throw TreeError("invalid operator tag");
        }
        if (n.op == Op::Constant && !std::isfinite(n.value)) {
            throw TreeError("constant leaves must be finite");
        }
        open = open - 1 + static_cast<std::size_t>(arity(n.op));
    }
    if (open != 0) {
        throw TreeError("operator is missing operands");
    }
}

ExpressionTree ExpressionTree::constant(double value) {
    return ExpressionTree({Node{Op::Constant, value, 0}});
}

ExpressionTree ExpressionTree::variable(std::uint32_t index) {
    return ExpressionTree({Node{Op::Variable, 0.0, index}}, Unchecked{});
}

ExpressionTree ExpressionTree::unary(Op op, const ExpressionTree& child) {
    if (arity(op) != 1) {
        throw TreeError("operator '" + std::string(op_name(op)) + "' is not unary");
    }
    std::vector<Node> nodes;
    nodes.reserve(child.size() + 1);
    nodes.push_back(Node{op, 0.0, 0});
    nodes.insert(nodes.end(), child.nodes_.begin(), child.nodes_.end());
    return ExpressionTree(std::move(nodes), Unchecked{});
}

ExpressionTree ExpressionTree::binary(Op op, const ExpressionTree& lhs, const ExpressionTree& rhs) {
    if (arity(op) != 2) {
        throw TreeError("operator '" + std::string(op_name(op)) + "' is not binary");
    }
    std::vector<Node> nodes;
    nodes.reserve(lhs.size() + rhs.size() + 1);
    nodes.push_back(Node{op, 0.0, 0});
    nodes.insert(nodes.end(), lhs.nodes_.begin(), lhs.nodes_.end());
    nodes.insert(nodes.end(), rhs.nodes_.begin(), rhs.nodes_.end());
    return ExpressionTree(std::move(nodes), Unchecked{});
}

std::size_t ExpressionTree::subtree_end(std::size_t i) const {
    std::size_t open = 1;
    while (open > 0) {
        open = open - 1 + static_cast<std::size_t>(arity(nodes_[i].op));
        ++i;
    }
    return i;
}

std::size_t ExpressionTree::child(std::size_t i, int k) const {
    std::size_t c = i + 1;
    for (int j = 0; j < k; ++j) {
        c = subtree_end(c);
    }
    return c;
}

std::size_t ExpressionTree::depth() const {
    // Stack of remaining child slots per open ancestor.
    std::size_t best = 0;
    std::vector<int> pending;
    pending.reserve(16);
    for (const Node& n : nodes_) {
        best = std::max(best, pending.size());
        if (!pending.empty()) {
            --pending.back();
        }
        const int a = arity(n.op);
        if (a > 0) {
            pending.push_back(a);
        }
        while (!pending.empty() && pending.back() == 0) {
            pending.pop_back();
        }
    }
    return best;
}

ExpressionTree ExpressionTree::subtree(std::size_t i) const {
    return ExpressionTree(std::vector<Node>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                            nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i))),
                          Unchecked{});
}

ExpressionTree ExpressionTree::replace_subtree(std::size_t i, const ExpressionTree& with) const {
    const std::size_t end = subtree_end(i);
    std::vector<Node> nodes;
    nodes.reserve(nodes_.size() - (end - i) + with.size());
    nodes.insert(nodes.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
    nodes.insert(nodes.end(), with.nodes_.begin(), with.nodes_.end());
    nodes.insert(nodes.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
    return ExpressionTree(std::move(nodes), Unchecked{});
}

std::size_t ExpressionTree::arity_required() const {
    std::size_t n = 0;
    for (const Node& node : nodes_) {
        if (node.op == Op::Variable) {
            n = std::max<std::size_t>(n, node.var + 1);
        }
    }
    return n;
}

// ---------------------------------------------------------------------------
// VariableSchema

VariableSchema::VariableSchema(std::vector<std::string> names_)
    : names(std::move(names_)), units(names.size()), descriptions(names.size()) {
    validate();
}

VariableSchema::VariableSchema(std::vector<std::string> names_, std::vector<std::string> units_,
                               std::vector<std::string> descriptions_)
    : names(std::move(names_)), units(std::move(units_)), descriptions(std::move(descriptions_)) {
    validate();
}

int VariableSchema::index_of(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void VariableSchema::validate() const {
    if (units.size() != names.size() || descriptions.size() != names.size()) {
        throw SchemaError("schema names, units and descriptions differ in length");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw SchemaError("duplicate variable name '" + n + "'");
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

double protected_div(double a, double b) noexcept { return std::abs(b) > kProtectEps ? a / b : 1.0; }

double protected_log(double a) noexcept {
    return std::abs(a) > kProtectEps ? std::log(std::abs(a)) : 0.0;
}

double clamped_pow(double a, double b) noexcept {
    // NaN survives the clamp and is reported as degenerate by the caller.
    return std::clamp(std::pow(a, b), -kPowClamp, kPowClamp);
}

namespace {

double apply_unary(Op op, double a) noexcept {
    switch (op) {
    case Op::Neg: return -a;
    case Op::Exp: return std::exp(a);
    case Op::Log: return protected_log(a);
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    default: return a;
    }
}

double apply_binary(Op op, double a, double b) noexcept {
    switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return protected_div(a, b);
    case Op::Pow: return clamped_pow(a, b);
    default: return a;
    }
}

double eval_at(std::span<const Node> nodes, std::size_t& i, std::span<const double> row) {
    const Node& n = nodes[i++];
    switch (arity(n.op)) {
    case 0:
        return n.op == Op::Constant ? n.value : row[n.var];
    case 1:
        return apply_unary(n.op, eval_at(nodes, i, row));
    default: {
        const double a = eval_at(nodes, i, row);
        const double b = eval_at(nodes, i, row);
        return apply_binary(n.op, a, b);
    }
    }
}

}  // namespace

Evaluation evaluate(const ExpressionTree& tree, std::span<const double> row) {
    if (row.size() < tree.arity_required()) {
        throw TreeError("row has fewer entries than the tree's variables require");
    }
    std::size_t i = 0;
    const double v = eval_at(tree.nodes(), i, row);
    if (!std::isfinite(v)) {
        return {0.0, true};
    }
    return {v, false};
}

BatchEvaluation evaluate(const ExpressionTree& tree, const Eigen::MatrixXd& X) {
    if (static_cast<std::size_t>(X.cols()) < tree.arity_required()) {
        throw TreeError("data has fewer columns than the tree's variables require");
    }
    const auto nodes = tree.nodes();
    const Eigen::Index rows = X.rows();
    const auto count = static_cast<Eigen::Index>(nodes.size());

    // One column per node, filled right-to-left so children precede parents.
    thread_local Eigen::ArrayXXd buffer;
    if (buffer.rows() != rows || buffer.cols() < count) {
        buffer.resize(rows, std::max<Eigen::Index>(count, 64));
    }
    thread_local std::vector<Eigen::Index> ends;
    ends.assign(nodes.size(), 0);

    for (Eigen::Index i = count - 1; i >= 0; --i) {
        const Node& n = nodes[static_cast<std::size_t>(i)];
        auto out = buffer.col(i);
        switch (arity(n.op)) {
        case 0:
            ends[static_cast<std::size_t>(i)] = i + 1;
            if (n.op == Op::Constant) {
                out.setConstant(n.value);
            } else {
                out = X.col(n.var).array();
            }
            break;
        case 1: {
            ends[static_cast<std::size_t>(i)] = ends[static_cast<std::size_t>(i + 1)];
            const auto a = buffer.col(i + 1);
            switch (n.op) {
            case Op::Neg: out = -a; break;
            default: out = a.unaryExpr([op = n.op](double v) { return apply_unary(op, v); }); break;
            }
            break;
        }
        default: {
            const Eigen::Index rhs = ends[static_cast<std::size_t>(i + 1)];
            ends[static_cast<std::size_t>(i)] = ends[static_cast<std::size_t>(rhs)];
            const auto a = buffer.col(i + 1);
            const auto b = buffer.col(rhs);
            switch (n.op) {
            case Op::Add: out = a + b; break;
            case Op::Sub: out = a - b; break;
            case Op::Mul: out = a * b; break;
            default:
                out = a.binaryExpr(b, [op = n.op](double x, double y) { return apply_binary(op, x, y); });
                break;
            }
            break;
        }
        }
    }

    BatchEvaluation result;
    result.values = buffer.col(0).matrix();
    if (!result.values.allFinite()) {
        result.degenerate = true;
        result.values = result.values.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

char binary_symbol(Op op) {
    switch (op) {
    case Op::Add: return '+';
    case Op::Sub: return '-';
    case Op::Mul: return '*';
    case Op::Div: return '/';
    default: return '^';
    }
}

void render_at(const ExpressionTree& tree, std::size_t i, const VariableSchema& schema, bool bare,
               std::string& out);

void render_child_bare(const ExpressionTree& tree, std::size_t i, const VariableSchema& schema,
                       std::string& out) {
    render_at(tree, i, schema, true, out);
}

void render_at(const ExpressionTree& tree, std::size_t i, const VariableSchema& schema, bool bare,
               std::string& out) {
    const Node& n = tree[i];
    switch (n.op) {
    case Op::Constant: {
        const std::string s = shortest_number(n.value);
        if (s.front() == '-') {
            out += '(';
            out += s;
            out += ')';
        } else {
            out += s;
        }
        return;
    }
    case Op::Variable:
        if (n.var >= schema.size()) {
            throw SchemaError("variable index " + std::to_string(n.var) + " outside schema");
        }
        out += schema.names[n.var];
        return;
    case Op::Neg:
        out += "(-(";
        render_child_bare(tree, i + 1, schema, out);
        out += "))";
        return;
    case Op::Exp:
    case Op::Log:
    case Op::Sin:
    case Op::Cos:
        out += op_name(n.op);
        out += '(';
        render_child_bare(tree, i + 1, schema, out);
        out += ')';
        return;
    default:
        if (!bare) out += '(';
        render_at(tree, i + 1, schema, false, out);
        out += ' ';
        out += binary_symbol(n.op);
        out += ' ';
        render_at(tree, tree.child(i, 1), schema, false, out);
        if (!bare) out += ')';
        return;
    }
}

std::string key_at(const ExpressionTree& tree, std::size_t i) {
    const Node& n = tree[i];
    switch (arity(n.op)) {
    case 0:
        if (n.op == Op::Constant) {
            return "#" + format_number(n.value == 0.0 ? 0.0 : n.value, 12);
        }
        return "$" + std::to_string(n.var);
    case 1:
        return std::string(op_name(n.op)) + "(" + key_at(tree, i + 1) + ")";
    default: {
        std::string a = key_at(tree, i + 1);
        std::string b = key_at(tree, tree.child(i, 1));
        if (is_commutative(n.op) && b < a) {
            std::swap(a, b);
        }
        return std::string(op_name(n.op)) + "(" + a + "," + b + ")";
    }
    }
}

}  // namespace

std::string render(const ExpressionTree& tree, const VariableSchema& schema) {
    std::string out;
    render_at(tree, 0, schema, false, out);
    return out;
}

std::string canonical_key(const ExpressionTree& tree) { return key_at(tree, 0); }

// ---------------------------------------------------------------------------

namespace build {
ExpressionTree num(double v) { return ExpressionTree::constant(v); }
ExpressionTree var(std::uint32_t i) { return ExpressionTree::variable(i); }
ExpressionTree add(const ExpressionTree& a, const ExpressionTree& b) { return ExpressionTree::binary(Op::Add, a, b); }
ExpressionTree sub(const ExpressionTree& a, const ExpressionTree& b) { return ExpressionTree::binary(Op::Sub, a, b); }
ExpressionTree mul(const ExpressionTree& a, const ExpressionTree& b) { return ExpressionTree::binary(Op::Mul, a, b); }
ExpressionTree div(const ExpressionTree& a, const ExpressionTree& b) { return ExpressionTree::binary(Op::Div, a, b); }
ExpressionTree pow(const ExpressionTree& a, const ExpressionTree& b) { return ExpressionTree::binary(Op::Pow, a, b); }
ExpressionTree neg(const ExpressionTree& a) { return ExpressionTree::unary(Op::Neg, a); }
ExpressionTree exp(const ExpressionTree& a) { return ExpressionTree::unary(Op::Exp, a); }
ExpressionTree log(const ExpressionTree& a) { return ExpressionTree::unary(Op::Log, a); }
ExpressionTree sin(const ExpressionTree& a) { return ExpressionTree::unary(Op::Sin, a); }
ExpressionTree cos(const ExpressionTree& a) { return ExpressionTree::unary(Op::Cos, a); }
}  // namespace build

}  // namespace pisr
