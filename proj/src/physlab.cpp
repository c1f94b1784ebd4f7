#include "pisr/physlab.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pisr/random.hpp"

namespace pisr {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_range(const Range& r, const char* what) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || !(r.lo < r.hi)) {
        throw DatasetError(std::string("degenerate sampling range for ") + what);
    }
}

}  // namespace

std::string_view scenario_name(ScenarioId id) noexcept {
    switch (id) {
    case ScenarioId::DropBall: return "drop_ball";
    case ScenarioId::Shm: return "shm";
    default: return "em_wave";
    }
}

ScenarioId scenario_from_name(std::string_view name) {
    if (name == "drop_ball") return ScenarioId::DropBall;
    if (name == "shm") return ScenarioId::Shm;
    if (name == "em_wave") return ScenarioId::EmWave;
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

std::string_view noise_target_name(NoiseTarget t) noexcept {
    switch (t) {
    case NoiseTarget::None: return "none";
    case NoiseTarget::Features: return "features";
    case NoiseTarget::Target: return "target";
    default: return "both";
    }
}

NoiseTarget noise_target_from_name(std::string_view name) {
    if (name == "none") return NoiseTarget::None;
    if (name == "features") return NoiseTarget::Features;
    if (name == "target") return NoiseTarget::Target;
    if (name == "both") return NoiseTarget::Both;
    throw std::invalid_argument("unknown noise target '" + std::string(name) + "'");
}

void SamplingRanges::validate() const {
    check_range(mass_kg, "mass");
    check_range(char_length_m, "characteristic length");
    check_range(initial_height_m, "initial height");
    check_range(damping_kg_per_s, "damping");
    check_range(spring_constant_n_per_m, "spring constant");
    check_range(phase_rad, "phase");
    if (time_s) {
        check_range(*time_s, "time");
    }
    if (mass_kg.lo <= 0.0) {
        throw DatasetError("mass range must be strictly positive");
    }
    if (initial_height_m.lo < 0.0) {
        throw DatasetError("initial height range must be non-negative");
    }
    if (n_samples < 1) {
        throw DatasetError("n_samples must be at least 1");
    }
}

void NoiseSpec::validate() const {
    if (!std::isfinite(level) || level < 0.0) {
        throw DatasetError("noise level must be a finite non-negative fraction");
    }
}

std::string ground_truth_text(ScenarioId id, const ScenarioOptions& options) {
    switch (id) {
    case ScenarioId::DropBall:
        return "(2 * 9.81 * h) ^ 0.5";
    case ScenarioId::Shm:
        return options.shm_form == ShmForm::Sqrt ? "A * cos((k / m) ^ 0.5 * t + phi)"
                                                 : "A * cos(k / m * t + phi)";
    default: {
        const std::string omega = "(" + fmt17(options.spring_constant) + " / m) ^ 0.5";
        const std::string wavenumber =
            options.wave_speed == 1.0 ? omega : "(" + omega + ") / " + fmt17(options.wave_speed);
        return "E0 * exp(-(b / m) * t / 2) * cos(" + wavenumber + " * x - " + omega + " * t)";
    }
    }
}

ScenarioSpec make_scenario(ScenarioId id, const ScenarioOptions& options) {
    if (!(options.spring_constant > 0.0) || !(options.wave_speed > 0.0)) {
        throw std::invalid_argument("spring constant and wave speed must be positive");
    }
    VariableSchema schema;
    std::string description;
    std::string target_unit;
    switch (id) {
    case ScenarioId::DropBall:
        schema = VariableSchema({"m", "L", "h", "b", "t"}, {"kg", "m", "m", "kg/s", "s"},
                                {"mass of the ball", "characteristic length (ball radius)",
                                 "drop height above the ground", "linear drag coefficient",
                                 "elapsed time since release"});
        description = "A ball is released from rest at height h near the Earth's surface under constant "
                      "gravity g = 9.81 m/s^2. The target y is the speed the ball reaches when it has "
                      "fallen the full height h.";
        target_unit = "m/s";
        break;
    case ScenarioId::Shm:
        schema = VariableSchema({"m", "A", "k", "phi", "t"}, {"kg", "m", "N/m", "rad", "s"},
                                {"oscillating mass", "oscillation amplitude", "spring constant",
                                 "phase offset", "time"});
        description = "A mass m attached to an ideal spring of stiffness k oscillates without friction "
                      "with amplitude A and phase offset phi. The target y is the displacement of the "
                      "mass from equilibrium at time t.";
        target_unit = "m";
        break;
    default:
        schema = VariableSchema({"m", "x", "E0", "b", "t"}, {"kg", "m", "V/m", "kg/s", "s"},
                                {"mass setting the damping rate b/m and angular frequency",
                                 "fixed observation position", "field amplitude", "damping coefficient",
                                 "time"});
        description = "A damped plane electromagnetic wave of amplitude E0 is observed at a fixed position x. "
                      "It decays with damping rate b/m and oscillates with angular frequency sqrt(" +
                      fmt17(options.spring_constant) + "/m) in normalized units where the propagation "
                      "speed is " + fmt17(options.wave_speed) + ". The target y is the electric field "
                      "strength at time t.";
        target_unit = "V/m";
        break;
    }
    ExpressionTree gt = parse(ground_truth_text(id, options), schema);
    return ScenarioSpec{id, std::move(gt), std::move(schema), std::move(description), std::move(target_unit),
                        options};
}

double population_stddev(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() == 0) {
        return 0.0;
    }
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().mean());
}

double snr_db(const Eigen::Ref<const Eigen::VectorXd>& clean, const Eigen::Ref<const Eigen::VectorXd>& noisy) {
    if (clean.size() != noisy.size() || clean.size() < 2) {
        throw std::invalid_argument("snr_db needs two equal-length vectors of at least 2 samples");
    }
    const Eigen::VectorXd noise = noisy - clean;
    const double noise_var = std::pow(population_stddev(noise), 2);
    if (noise_var == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(std::pow(population_stddev(clean), 2) / noise_var);
}

Dataset generate(const ScenarioSpec& scenario, const SamplingRanges& ranges, const NoiseSpec& noise,
                 std::uint64_t seed) {
    ranges.validate();
    noise.validate();

    const auto n = static_cast<Eigen::Index>(ranges.n_samples);
    Dataset d;
    d.X.resize(n, 5);
    d.y.resize(n);
    d.schema = scenario.schema;
    d.target_unit = scenario.target_unit;
    d.scenario = scenario.id;
    d.options = scenario.options;
    d.ranges = ranges;
    d.noise = noise;
    d.seed = seed;

    Rng params(derive_seed({seed, 0}));
    for (Eigen::Index r = 0; r < n; ++r) {
        const double m = params.uniform(ranges.mass_kg.lo, ranges.mass_kg.hi);
        const double len = params.uniform(ranges.char_length_m.lo, ranges.char_length_m.hi);
        const double h = params.uniform(ranges.initial_height_m.lo, ranges.initial_height_m.hi);
        const double b = params.uniform(ranges.damping_kg_per_s.lo, ranges.damping_kg_per_s.hi);
        const double t_max = std::sqrt(2.0 * h / kGravity);
        double t;
        if (!ranges.time_s) {
            t = params.uniform(0.0, t_max);
        } else {
            t = params.uniform(ranges.time_s->lo, ranges.time_s->hi);
            for (std::size_t step = 1; t > t_max && step < ranges.max_steps; ++step) {
                t = params.uniform(ranges.time_s->lo, ranges.time_s->hi);
            }
            t = std::min(t, t_max);
        }
        switch (scenario.id) {
        case ScenarioId::DropBall:
            d.X.row(r) << m, len, h, b, t;
            break;
        case ScenarioId::Shm: {
            const double k = params.uniform(ranges.spring_constant_n_per_m.lo, ranges.spring_constant_n_per_m.hi);
            const double phi = params.uniform(ranges.phase_rad.lo, ranges.phase_rad.hi);
            d.X.row(r) << m, len, k, phi, t;
            break;
        }
        default:
            d.X.row(r) << m, len, h, b, t;
            break;
        }
    }

    std::array<double, 5> row{};
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < 5; ++c) {
            row[static_cast<std::size_t>(c)] = d.X(r, c);
        }
        const Evaluation e = evaluate(scenario.gt_tree, row);
        if (e.degenerate) {
            throw DatasetError("ground truth is not finite on a sampled row");
        }
        d.y(r) = e.value;
    }

    const Eigen::VectorXd clean_y = d.y;
    const bool noisy_features = noise.target == NoiseTarget::Features || noise.target == NoiseTarget::Both;
    const bool noisy_target = noise.target == NoiseTarget::Target || noise.target == NoiseTarget::Both;
    if (noise.level > 0.0 && noisy_features) {
        Rng rng(derive_seed({seed, 1}));
        for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
            const double sigma = noise.level * population_stddev(d.X.col(c));
            for (Eigen::Index r = 0; r < n; ++r) {
                d.X(r, c) += rng.normal(0.0, sigma);
            }
        }
    }
    if (noise.level > 0.0 && noisy_target) {
        Rng rng(derive_seed({seed, 2}));
        const double sigma = noise.level * population_stddev(clean_y);
        for (Eigen::Index r = 0; r < n; ++r) {
            d.y(r) += rng.normal(0.0, sigma);
        }
    }
    d.snr_db = n >= 2 ? snr_db(clean_y, d.y) : std::numeric_limits<double>::quiet_NaN();
    return d;
}

}  // namespace pisr
