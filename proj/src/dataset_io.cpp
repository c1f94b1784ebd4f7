#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pisr/physlab.hpp"

namespace pisr {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) { return Range{j.at(0).get<double>(), j.at(1).get<double>()}; }

json ranges_json(const SamplingRanges& r) {
    json j{
        {"mass_kg", range_json(r.mass_kg)},
        {"char_length_m", range_json(r.char_length_m)},
        {"initial_height_m", range_json(r.initial_height_m)},
        {"damping_kg_per_s", range_json(r.damping_kg_per_s)},
        {"spring_constant_n_per_m", range_json(r.spring_constant_n_per_m)},
        {"phase_rad", range_json(r.phase_rad)},
        {"time_s", r.time_s ? range_json(*r.time_s) : json("physical_bound")},
        {"n_samples", r.n_samples},
        {"max_steps", r.max_steps},
    };
    return j;
}

SamplingRanges ranges_from(const json& j) {
    SamplingRanges r;
    r.mass_kg = range_from(j.at("mass_kg"));
    r.char_length_m = range_from(j.at("char_length_m"));
    r.initial_height_m = range_from(j.at("initial_height_m"));
    r.damping_kg_per_s = range_from(j.at("damping_kg_per_s"));
    r.spring_constant_n_per_m = range_from(j.at("spring_constant_n_per_m"));
    r.phase_rad = range_from(j.at("phase_rad"));
    if (j.at("time_s").is_array()) {
        r.time_s = range_from(j.at("time_s"));
    }
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.max_steps = j.at("max_steps").get<std::size_t>();
    return r;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw DatasetError("non-numeric cell '" + cell + "' on line " + std::to_string(line_no));
    }
    return v;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
    std::filesystem::path p = csv;
    p.replace_extension(".meta.json");
    return p;
}

void write_dataset(const Dataset& d, const std::filesystem::path& csv) {
    std::ofstream out(csv, std::ios::binary);
    if (!out) {
        throw DatasetError("cannot write " + csv.string());
    }
    for (const auto& name : d.schema.names) {
        out << name << ',';
    }
    out << "y\n";
    for (Eigen::Index r = 0; r < d.X.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
            out << fmt17(d.X(r, c)) << ',';
        }
        out << fmt17(d.y(r)) << '\n';
    }
    if (!out) {
        throw DatasetError("failed writing " + csv.string());
    }

    json columns = json::array();
    for (std::size_t i = 0; i < d.schema.size(); ++i) {
        columns.push_back({{"name", d.schema.names[i]},
                           {"unit", d.schema.units[i]},
                           {"description", d.schema.descriptions[i]}});
    }
    json meta{
        {"columns", columns},
        {"target", {{"name", "y"}, {"unit", d.target_unit}}},
        {"ranges", ranges_json(d.ranges)},
        {"noise", {{"level", d.noise.level}, {"target", noise_target_name(d.noise.target)}}},
        {"seed", d.seed},
        {"rows", d.rows()},
    };
    if (d.scenario) {
        meta["scenario"] = scenario_name(*d.scenario);
        meta["gt_equation"] = render(make_scenario(*d.scenario, d.options).gt_tree, d.schema);
        meta["scenario_options"] = {
            {"shm_form", d.options.shm_form == ShmForm::Sqrt ? "sqrt" : "linear"},
            {"spring_constant", d.options.spring_constant},
            {"wave_speed", d.options.wave_speed},
        };
    } else {
        meta["scenario"] = nullptr;
    }
    if (std::isinf(d.snr_db)) {
        meta["snr_db"] = "noiseless";
    } else if (std::isnan(d.snr_db)) {
        meta["snr_db"] = nullptr;
    } else {
        meta["snr_db"] = d.snr_db;
    }

    std::ofstream side(sidecar_path(csv), std::ios::binary);
    if (!side) {
        throw DatasetError("cannot write " + sidecar_path(csv).string());
    }
    side << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv) {
    std::ifstream in(csv, std::ios::binary);
    if (!in) {
        throw DatasetError("cannot open " + csv.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DatasetError("malformed header: empty file");
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "y") {
        throw DatasetError("malformed header: last column must be 'y'");
    }
    std::vector<std::string> names(header.begin(), header.end() - 1);
    const std::size_t cols = header.size();

    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != cols) {
            throw DatasetError("ragged row on line " + std::to_string(line_no) + ": expected " +
                               std::to_string(cols) + " cells, found " + std::to_string(cells.size()));
        }
        for (const auto& cell : cells) {
            values.push_back(parse_cell(cell, line_no));
        }
        ++rows;
    }

    Dataset d;
    d.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols - 1));
    d.y.resize(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c + 1 < cols; ++c) {
            d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
        }
        d.y(static_cast<Eigen::Index>(r)) = values[r * cols + cols - 1];
    }
    d.schema = VariableSchema(names);
    d.ranges.n_samples = rows;

    const auto side = sidecar_path(csv);
    if (!std::filesystem::exists(side)) {
        return d;
    }
    json meta;
    try {
        std::ifstream sin(side, std::ios::binary);
        meta = json::parse(sin);
        const auto& columns = meta.at("columns");
        if (columns.size() != names.size()) {
            throw DatasetError("sidecar column count does not match the CSV header");
        }
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (columns[i].at("name").get<std::string>() != names[i]) {
                throw DatasetError("sidecar column '" + columns[i].at("name").get<std::string>() +
                                   "' does not match CSV header '" + names[i] + "'");
            }
            d.schema.units[i] = columns[i].at("unit").get<std::string>();
            d.schema.descriptions[i] = columns[i].at("description").get<std::string>();
        }
        d.target_unit = meta.at("target").at("unit").get<std::string>();
        d.ranges = ranges_from(meta.at("ranges"));
        d.noise.level = meta.at("noise").at("level").get<double>();
        d.noise.target = noise_target_from_name(meta.at("noise").at("target").get<std::string>());
        d.seed = meta.at("seed").get<std::uint64_t>();
        if (!meta.at("scenario").is_null()) {
            d.scenario = scenario_from_name(meta.at("scenario").get<std::string>());
            const auto& opt = meta.at("scenario_options");
            d.options.shm_form = opt.at("shm_form").get<std::string>() == "linear" ? ShmForm::Linear : ShmForm::Sqrt;
            d.options.spring_constant = opt.at("spring_constant").get<double>();
            d.options.wave_speed = opt.at("wave_speed").get<double>();
        }
        const auto& snr = meta.at("snr_db");
        if (snr.is_string()) {
            d.snr_db = std::numeric_limits<double>::infinity();
        } else if (snr.is_number()) {
            d.snr_db = snr.get<double>();
        }
    } catch (const json::exception& e) {
        throw DatasetError("malformed sidecar " + side.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DatasetError("malformed sidecar " + side.string() + ": " + e.what());
    }
    return d;
}

}  // namespace pisr
