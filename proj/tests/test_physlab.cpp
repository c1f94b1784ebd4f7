#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pisr/physlab.hpp"

using namespace pisr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pisr_test_physlab";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double gt_at(const ScenarioSpec& s, std::vector<double> row) { return evaluate(s.gt_tree, row).value; }

}  // namespace

TEST_CASE("ground-truth equations at hand-checked points") {
    const auto drop = make_scenario(ScenarioId::DropBall);
    // sqrt(2 * 9.81 * 5) = sqrt(98.1)
    CHECK(gt_at(drop, {1.0, 0.1, 5.0, 0.2, 0.3}) == doctest::Approx(9.904544411531507).epsilon(1e-14));

    const auto shm = make_scenario(ScenarioId::Shm);
    // columns m, A, k, phi, t: A cos(sqrt(4/1) * pi/4 + 0) = 2 cos(pi/2)
    CHECK(std::abs(gt_at(shm, {1.0, 2.0, 4.0, 0.0, M_PI / 4})) < 1e-15);
    CHECK(gt_at(shm, {1.0, 2.0, 4.0, 0.0, 0.0}) == 2.0);
    // linear form: A cos(k/m t + phi) = 3 cos(2 * 0.5) = 3 cos(1)
    const auto shm_lin = make_scenario(ScenarioId::Shm, ScenarioOptions{ShmForm::Linear});
    CHECK(gt_at(shm_lin, {2.0, 3.0, 4.0, 0.0, 0.5}) == doctest::Approx(3.0 * std::cos(1.0)).epsilon(1e-15));

    const auto em = make_scenario(ScenarioId::EmWave);
    // columns m, x, E0, b, t: x = t and b = 0 leave E0 cos(0)
    CHECK(gt_at(em, {4.0, 0.7, 3.0, 0.0, 0.7}) == 3.0);
    // E0 exp(-(b/m) t/2) cos(sqrt(1/m) (x - t)) with m = 1, b = 2, t = 1, x = 0
    CHECK(gt_at(em, {1.0, 0.0, 1.0, 2.0, 1.0}) == doctest::Approx(std::exp(-1.0) * std::cos(-1.0)).epsilon(1e-14));
}

TEST_CASE("scenario schemas carry units") {
    const auto drop = make_scenario(ScenarioId::DropBall);
    CHECK(drop.schema.names == std::vector<std::string>{"m", "L", "h", "b", "t"});
    CHECK(drop.target_unit == "m/s");
    CHECK(make_scenario(ScenarioId::Shm).schema.units[2] == "N/m");
    CHECK(make_scenario(ScenarioId::EmWave).target_unit == "V/m");
    CHECK(scenario_from_name("em_wave") == ScenarioId::EmWave);
    CHECK_THROWS_AS(scenario_from_name("pendulum"), std::invalid_argument);
}

TEST_CASE("generation respects ranges and the time bound") {
    for (ScenarioId id : {ScenarioId::DropBall, ScenarioId::Shm, ScenarioId::EmWave}) {
        const auto s = make_scenario(id);
        SamplingRanges r;
        const Dataset d = generate(s, r, NoiseSpec{0.0, NoiseTarget::None}, 3);
        REQUIRE(d.X.rows() == 500);
        REQUIRE(d.X.cols() == 5);
        CHECK(std::isinf(d.snr_db));
        for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
            CHECK(d.X(i, 0) >= r.mass_kg.lo);
            CHECK(d.X(i, 0) < r.mass_kg.hi);
            const std::vector<double> row{d.X(i, 0), d.X(i, 1), d.X(i, 2), d.X(i, 3), d.X(i, 4)};
            CHECK(d.y(i) == evaluate(s.gt_tree, row).value);
        }
    }
    // drop_ball keeps h in column 2, so the bound is checkable row by row
    const Dataset d = generate(make_scenario(ScenarioId::DropBall), {}, NoiseSpec{0.0, NoiseTarget::None}, 9);
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
        CHECK(d.X(i, 4) >= 0.0);
        CHECK(d.X(i, 4) <= std::sqrt(2.0 * d.X(i, 2) / kGravity));
    }
}

TEST_CASE("explicit time range is redrawn and clamped to the physical bound") {
    SamplingRanges r;
    r.time_s = Range{0.0, 100.0};
    r.max_steps = 3;
    const Dataset d = generate(make_scenario(ScenarioId::DropBall), r, NoiseSpec{0.0, NoiseTarget::None}, 1);
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
        CHECK(d.X(i, 4) <= std::sqrt(2.0 * d.X(i, 2) / kGravity));
    }
}

TEST_CASE("generation is deterministic per seed") {
    const auto s = make_scenario(ScenarioId::Shm);
    const Dataset a = generate(s, {}, {}, 42);
    const Dataset b = generate(s, {}, {}, 42);
    const Dataset c = generate(s, {}, {}, 43);
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
    CHECK(a.X != c.X);
}

TEST_CASE("one percent target noise gives about 40 dB") {
    const auto s = make_scenario(ScenarioId::DropBall);
    const Dataset d = generate(s, {}, NoiseSpec{0.01, NoiseTarget::Target}, 7);
    CHECK(d.snr_db > 39.0);
    CHECK(d.snr_db < 41.0);
    const Dataset clean = generate(s, {}, NoiseSpec{0.0, NoiseTarget::Target}, 7);
    CHECK(clean.X == d.X);
    CHECK(clean.y != d.y);
}

TEST_CASE("feature noise leaves the target clean") {
    const auto s = make_scenario(ScenarioId::EmWave);
    const Dataset clean = generate(s, {}, NoiseSpec{0.0, NoiseTarget::None}, 5);
    const Dataset noisy = generate(s, {}, NoiseSpec{0.03, NoiseTarget::Features}, 5);
    CHECK(noisy.y == clean.y);
    CHECK(noisy.X != clean.X);
    CHECK(std::isinf(noisy.snr_db));
    const Dataset both = generate(s, {}, NoiseSpec{0.03, NoiseTarget::Both}, 5);
    CHECK(both.X == noisy.X);
    CHECK(both.y != clean.y);
}

TEST_CASE("snr_db definition") {
    Eigen::VectorXd clean(4);
    clean << 1, -1, 1, -1;  // variance 1
    Eigen::VectorXd noisy = clean;
    noisy(0) += 0.1;
    noisy(1) -= 0.1;
    noisy(2) += 0.1;
    noisy(3) -= 0.1;  // noise variance 0.01
    CHECK(snr_db(clean, noisy) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(std::isinf(snr_db(clean, clean)));
    CHECK_THROWS(snr_db(clean, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("invalid inputs") {
    SamplingRanges r;
    r.mass_kg = Range{1.0, 1.0};
    CHECK_THROWS_AS(generate(make_scenario(ScenarioId::DropBall), r, {}, 0), DatasetError);
    CHECK_THROWS_AS(generate(make_scenario(ScenarioId::DropBall), {}, NoiseSpec{-0.1}, 0), DatasetError);
    SamplingRanges zero;
    zero.n_samples = 0;
    CHECK_THROWS_AS(generate(make_scenario(ScenarioId::DropBall), zero, {}, 0), DatasetError);
}

TEST_CASE("CSV and sidecar round trip") {
    const auto s = make_scenario(ScenarioId::Shm);
    SamplingRanges r;
    r.n_samples = 50;
    const Dataset d = generate(s, r, {}, 17);
    const fs::path csv = scratch("shm.csv");
    write_dataset(d, csv);
    CHECK(fs::exists(scratch("shm.meta.json")));

    const Dataset back = read_dataset(csv);
    CHECK(back.X == d.X);
    CHECK(back.y == d.y);
    CHECK(back.schema == d.schema);
    CHECK(back.target_unit == "m");
    REQUIRE(back.scenario.has_value());
    CHECK(*back.scenario == ScenarioId::Shm);
    CHECK(back.seed == 17);
    CHECK(back.noise == d.noise);
    CHECK(back.ranges == d.ranges);

    const std::string text = slurp(csv);
    CHECK(text.rfind("m,A,k,phi,t,y\n", 0) == 0);
    CHECK(text.find('\r') == std::string::npos);

    write_dataset(d, scratch("shm_again.csv"));
    CHECK(slurp(scratch("shm_again.csv")) == text);
}

TEST_CASE("noiseless sidecar reports noiseless SNR") {
    const Dataset d = generate(make_scenario(ScenarioId::DropBall), {}, NoiseSpec{0.0}, 1);
    write_dataset(d, scratch("quiet.csv"));
    const auto meta = nlohmann::json::parse(slurp(scratch("quiet.meta.json")));
    CHECK(meta.at("snr_db") == "noiseless");
    CHECK(meta.at("gt_equation") == "(((2 * 9.81) * h) ^ 0.5)");
}

TEST_CASE("reading malformed CSV files") {
    auto write = [](const std::string& name, const std::string& body) {
        std::ofstream(scratch(name), std::ios::binary) << body;
        return scratch(name);
    };
    CHECK_THROWS_AS(read_dataset(write("bad_header.csv", "a,b\n1,2\n")), DatasetError);
    CHECK_THROWS_AS(read_dataset(write("ragged.csv", "a,y\n1,2\n3\n")), DatasetError);
    CHECK_THROWS_AS(read_dataset(write("text.csv", "a,y\n1,zz\n")), DatasetError);
    CHECK_THROWS_AS(read_dataset(scratch("missing.csv")), DatasetError);

    const Dataset plain = read_dataset(write("plain.csv", "a,b,y\n1,2,3\n4,5,6\n"));
    CHECK(plain.rows() == 2);
    CHECK(plain.schema.names == std::vector<std::string>{"a", "b"});
    CHECK(plain.y(1) == 6.0);
    CHECK_FALSE(plain.scenario.has_value());
}
