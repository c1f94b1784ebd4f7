#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "pisr/expression.hpp"

namespace pisr {

inline constexpr double kGravity = 9.81;

enum class ScenarioId { DropBall, Shm, EmWave };

std::string_view scenario_name(ScenarioId id) noexcept;
ScenarioId scenario_from_name(std::string_view name);

// Angular frequency used for simple harmonic motion: sqrt(k/m) (default) or
// the k/m form written in the closed-form display equation.
enum class ShmForm { Sqrt, Linear };

struct ScenarioOptions {
    ShmForm shm_form = ShmForm::Sqrt;
    // em_wave: omega = sqrt(spring_constant / m), wavenumber = omega / wave_speed.
    double spring_constant = 1.0;
    double wave_speed = 1.0;

    friend bool operator==(const ScenarioOptions&, const ScenarioOptions&) = default;
};

struct ScenarioSpec {
    ScenarioId id;
    ExpressionTree gt_tree;
    VariableSchema schema;
    std::string description;
    std::string target_unit;
    ScenarioOptions options;
};

ScenarioSpec make_scenario(ScenarioId id, const ScenarioOptions& options = {});

// Ground truth as infix text over the scenario's schema.
std::string ground_truth_text(ScenarioId id, const ScenarioOptions& options = {});

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    friend bool operator==(const Range&, const Range&) = default;
};

/// Per-row sampling ranges. Every row draws mass, characteristic length,
/// initial height, damping and time; shm additionally draws the spring
/// constant and phase. Time is bounded by sqrt(2h/g) of the row's height.
struct SamplingRanges {
    Range mass_kg{0.1, 10.0};
    Range char_length_m{0.01, 0.5};
    Range initial_height_m{1.0, 100.0};
    Range damping_kg_per_s{0.0, 1.0};
    Range spring_constant_n_per_m{1.0, 100.0};
    Range phase_rad{0.0, 6.283185307179586};
    // Unset means [0, sqrt(2h/g)]; when set, draws above the physical bound
    // are redrawn up to max_steps times and then clamped.
    std::optional<Range> time_s;
    std::size_t n_samples = 500;
    std::size_t max_steps = 1000;

    void validate() const;

    friend bool operator==(const SamplingRanges&, const SamplingRanges&) = default;
};

enum class NoiseTarget { None, Features, Target, Both };

std::string_view noise_target_name(NoiseTarget t) noexcept;
NoiseTarget noise_target_from_name(std::string_view name);

struct NoiseSpec {
    double level = 0.01;  // fraction of each clean column's standard deviation
    NoiseTarget target = NoiseTarget::Target;

    void validate() const;

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    VariableSchema schema;
    std::string target_unit;
    std::optional<ScenarioId> scenario;
    ScenarioOptions options;
    SamplingRanges ranges;
    NoiseSpec noise;
    std::uint64_t seed = 0;
    // SNR of y against its clean signal; +inf when noiseless, NaN if unknown.
    double snr_db = std::numeric_limits<double>::quiet_NaN();

    std::size_t rows() const noexcept { return static_cast<std::size_t>(X.rows()); }
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Dataset generate(const ScenarioSpec& scenario, const SamplingRanges& ranges, const NoiseSpec& noise,
                 std::uint64_t seed);

/// 10 log10(var(clean) / var(noisy - clean)); +inf when the two agree.
double snr_db(const Eigen::Ref<const Eigen::VectorXd>& clean, const Eigen::Ref<const Eigen::VectorXd>& noisy);

double population_stddev(const Eigen::Ref<const Eigen::VectorXd>& v);

// "<stem>.meta.json" next to the CSV.
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

void write_dataset(const Dataset& d, const std::filesystem::path& csv);
/// Reads the CSV and, when present, its sidecar.
Dataset read_dataset(const std::filesystem::path& csv);

}  // namespace pisr
