#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "pisr/expression.hpp"

namespace pisr {

// Exponents over the SI base dimensions (kg, m, s, A, K, mol, cd).
struct Dimension {
    std::array<double, 7> exponents{};

    bool dimensionless() const noexcept;
    bool same_as(const Dimension& other) const noexcept;
    Dimension operator*(const Dimension& other) const noexcept;
    Dimension operator/(const Dimension& other) const noexcept;
    Dimension pow(double p) const noexcept;
};

/// Parses "kg", "m/s^2", "N/m", "kg m^2 s^-2", "rad", "1" or "".
/// Returns nullopt for symbols outside the supported SI set.
std::optional<Dimension> parse_unit(std::string_view text);

/// Counts dimensional violations of a tree: adding or subtracting unlike
/// quantities, transcendental functions of dimensioned arguments, dimensioned
/// exponents, and a result that disagrees with target_unit. Constants, empty
/// unit strings and unknown symbols act as wildcards.
int count_unit_violations(const ExpressionTree& tree, const VariableSchema& schema, std::string_view target_unit);

}  // namespace pisr
