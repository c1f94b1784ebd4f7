#include "pisr/units.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <vector>

namespace pisr {

namespace {

constexpr double kExpTol = 1e-9;

struct Symbol {
    std::string_view name;
    std::array<double, 7> exponents;
};

// kg, m, s, A, K, mol, cd
constexpr Symbol kSymbols[] = {
    {"kg", {1, 0, 0, 0, 0, 0, 0}},   {"m", {0, 1, 0, 0, 0, 0, 0}},    {"s", {0, 0, 1, 0, 0, 0, 0}},
    {"A", {0, 0, 0, 1, 0, 0, 0}},    {"K", {0, 0, 0, 0, 1, 0, 0}},    {"mol", {0, 0, 0, 0, 0, 1, 0}},
    {"cd", {0, 0, 0, 0, 0, 0, 1}},   {"N", {1, 1, -2, 0, 0, 0, 0}},   {"J", {1, 2, -2, 0, 0, 0, 0}},
    {"W", {1, 2, -3, 0, 0, 0, 0}},   {"Pa", {1, -1, -2, 0, 0, 0, 0}}, {"V", {1, 2, -3, -1, 0, 0, 0}},
    {"C", {0, 0, 1, 1, 0, 0, 0}},    {"Hz", {0, 0, -1, 0, 0, 0, 0}},  {"rad", {0, 0, 0, 0, 0, 0, 0}},
    {"1", {0, 0, 0, 0, 0, 0, 0}},
};

// Wildcard-aware dimension used during propagation.
struct Inferred {
    bool known = false;
    Dimension dim;
};

struct Propagator {
    const ExpressionTree& tree;
    std::vector<Inferred> leaves;  // per schema column
    int violations = 0;

    Inferred at(std::size_t& i) {
        const Node& n = tree[i++];
        switch (n.op) {
        case Op::Constant:
            return {};
        case Op::Variable:
            return n.var < leaves.size() ? leaves[n.var] : Inferred{};
        case Op::Neg:
            return at(i);
        case Op::Exp:
        case Op::Log:
        case Op::Sin:
        case Op::Cos: {
            const Inferred a = at(i);
            if (a.known && !a.dim.dimensionless()) {
                ++violations;
            }
            return {true, Dimension{}};
        }
        case Op::Add:
        case Op::Sub: {
            const Inferred a = at(i);
            const Inferred b = at(i);
            if (a.known && b.known) {
                if (!a.dim.same_as(b.dim)) {
                    ++violations;
                    return {};
                }
                return a;
            }
            return a.known ? a : b;
        }
        case Op::Mul:
        case Op::Div: {
            const Inferred a = at(i);
            const Inferred b = at(i);
            if (a.known && b.known) {
                return {true, n.op == Op::Mul ? a.dim * b.dim : a.dim / b.dim};
            }
            return {};
        }
        case Op::Pow: {
            const Inferred base = at(i);
            const std::size_t exponent_at = i;
            const Inferred ex = at(i);
            if (ex.known && !ex.dim.dimensionless()) {
                ++violations;
            }
            if (!base.known) {
                return {};
            }
            if (base.dim.dimensionless()) {
                return base;
            }
            if (tree[exponent_at].op == Op::Constant) {
                return {true, base.dim.pow(tree[exponent_at].value)};
            }
            // A dimensioned base raised to a non-literal power has no unit.
            ++violations;
            return {};
        }
        default:
            return {};
        }
    }
};

}  // namespace

bool Dimension::dimensionless() const noexcept {
    for (double e : exponents) {
        if (std::abs(e) > kExpTol) return false;
    }
    return true;
}

bool Dimension::same_as(const Dimension& other) const noexcept {
    for (std::size_t k = 0; k < exponents.size(); ++k) {
        if (std::abs(exponents[k] - other.exponents[k]) > kExpTol) return false;
    }
    return true;
}

Dimension Dimension::operator*(const Dimension& other) const noexcept {
    Dimension d;
    for (std::size_t k = 0; k < exponents.size(); ++k) d.exponents[k] = exponents[k] + other.exponents[k];
    return d;
}

Dimension Dimension::operator/(const Dimension& other) const noexcept {
    Dimension d;
    for (std::size_t k = 0; k < exponents.size(); ++k) d.exponents[k] = exponents[k] - other.exponents[k];
    return d;
}

Dimension Dimension::pow(double p) const noexcept {
    Dimension d;
    for (std::size_t k = 0; k < exponents.size(); ++k) d.exponents[k] = exponents[k] * p;
    return d;
}

std::optional<Dimension> parse_unit(std::string_view text) {
    Dimension result;
    std::size_t i = 0;
    bool divide_next = false;
    auto skip_space = [&] {
        while (i < text.size() && (text[i] == ' ' || text[i] == '*')) ++i;
    };
    skip_space();
    while (i < text.size()) {
        if (text[i] == '/') {
            divide_next = true;
            ++i;
            skip_space();
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) && text[j] != '^')) ++j;
        if (j == i) {
            return std::nullopt;
        }
        const std::string_view name = text.substr(i, j - i);
        const Symbol* sym = nullptr;
        for (const Symbol& s : kSymbols) {
            if (s.name == name) sym = &s;
        }
        if (sym == nullptr) {
            return std::nullopt;
        }
        double power = 1.0;
        i = j;
        if (i < text.size() && text[i] == '^') {
            ++i;
            std::size_t k = i;
            while (k < text.size() && (text[k] == '-' || text[k] == '+' || text[k] == '.' ||
                                       std::isdigit(static_cast<unsigned char>(text[k])))) {
                ++k;
            }
            std::string_view num = text.substr(i, k - i);
            if (!num.empty() && num.front() == '+') num.remove_prefix(1);
            auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), power);
            if (num.empty() || ec != std::errc() || ptr != num.data() + num.size()) {
                return std::nullopt;
            }
            i = k;
        }
        Dimension factor;
        factor.exponents = sym->exponents;
        factor = factor.pow(divide_next ? -power : power);
        result = result * factor;
        divide_next = false;
        skip_space();
    }
    return result;
}

int count_unit_violations(const ExpressionTree& tree, const VariableSchema& schema, std::string_view target_unit) {
    Propagator p{tree, {}, 0};
    p.leaves.reserve(schema.size());
    for (const auto& unit : schema.units) {
        const auto dim = unit.empty() ? std::nullopt : parse_unit(unit);
        p.leaves.push_back(dim ? Inferred{true, *dim} : Inferred{});
    }
    std::size_t i = 0;
    const Inferred result = p.at(i);
    if (const auto target = target_unit.empty() ? std::nullopt : parse_unit(target_unit);
        target && result.known && !result.dim.same_as(*target)) {
        ++p.violations;
    }
    return p.violations;
}

}  // namespace pisr
