#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "pisr/bench.hpp"

namespace pisr {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    }
    return n == 0 ? kNaN : sum / static_cast<double>(n);
}

std::string fixed3(double v) {
    if (!std::isfinite(v)) return "";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

struct Row {
    std::vector<std::string> labels;
    std::vector<double> values;
    std::vector<double> mae;  // tie-breaker per value column
};

// Each group is the set of rows sharing labels[0]. by_column marks the best
// cell per column (noise table); otherwise the best row by tree_score.
struct Table {
    std::string title;
    std::string file;
    std::vector<std::string> label_cols;
    std::vector<std::string> value_cols;
    std::vector<Row> rows;
    bool by_column = false;
    std::size_t score_col = 0;
};

struct Metrics4 {
    double mae, mse, r2, tree_score;
};

Metrics4 medians(const std::vector<const RunReport*>& runs) {
    std::vector<double> mae, mse, r2, ts;
    for (const RunReport* r : runs) {
        if (!r->ok()) continue;
        mae.push_back(r->mae);
        mse.push_back(r->mse);
        r2.push_back(r->r2);
        ts.push_back(r->tree_score);
    }
    return {median(mae), median(mse), median(r2), median(ts)};
}

// Keys in order of first appearance.
template <class Key>
class OrderedGroups {
public:
    std::vector<const RunReport*>& at(const Key& k) {
        auto it = index_.find(k);
        if (it == index_.end()) {
            it = index_.emplace(k, keys_.size()).first;
            keys_.push_back(k);
            groups_.emplace_back();
        }
        return groups_[it->second];
    }
    const std::vector<Key>& keys() const { return keys_; }
    const std::vector<const RunReport*>& get(const Key& k) const { return groups_[index_.at(k)]; }

private:
    std::map<Key, std::size_t> index_;
    std::vector<Key> keys_;
    std::vector<std::vector<const RunReport*>> groups_;
};

using Labels = std::vector<std::string>;

Table benchmark_table(const std::vector<RunReport>& reports) {
    Table t{"Benchmark (median over repeats)", "table2_benchmark.csv", {"scenario", "critic", "preset"},
            {"mae", "mse", "r2", "tree_score"}, {}, false, 3};
    OrderedGroups<Labels> groups;
    for (const auto& r : reports) groups.at({r.scenario, r.critic, r.preset}).push_back(&r);
    for (const auto& k : groups.keys()) {
        const Metrics4 m = medians(groups.get(k));
        t.rows.push_back({k, {m.mae, m.mse, m.r2, m.tree_score}, {m.mae, m.mae, m.mae, m.mae}});
    }
    return t;
}

Table prompt_table(const std::vector<RunReport>& reports) {
    Table t{"Prompt variants (median over repeats, mean over scenarios)", "table3_prompts.csv",
            {"variant", "critic", "preset"}, {"mae", "mse", "r2", "tree_score"}, {}, false, 3};
    OrderedGroups<Labels> groups;
    for (const auto& r : reports) {
        groups.at({std::string(1, r.variant), r.critic, r.preset, r.scenario}).push_back(&r);
    }
    OrderedGroups<Labels> rows;
    std::map<Labels, std::vector<Metrics4>> per_scenario;
    for (const auto& k : groups.keys()) {
        const Labels row{k[0], k[1], k[2]};
        rows.at(row);
        per_scenario[row].push_back(medians(groups.get(k)));
    }
    for (const auto& k : rows.keys()) {
        std::vector<double> mae, mse, r2, ts;
        for (const auto& m : per_scenario[k]) {
            mae.push_back(m.mae);
            mse.push_back(m.mse);
            r2.push_back(m.r2);
            ts.push_back(m.tree_score);
        }
        const double a = mean_of(mae);
        t.rows.push_back({k, {a, mean_of(mse), mean_of(r2), mean_of(ts)}, {a, a, a, a}});
    }
    return t;
}

Table noise_table(const std::vector<RunReport>& reports) {
    std::set<std::string> critics;
    for (const auto& r : reports) critics.insert(r.critic);
    const bool with_critic = critics.size() > 1;

    Table t{"Noise robustness (median tree_score over repeats)", "table4_noise.csv", {}, {}, {}, true, 0};
    t.label_cols = with_critic ? Labels{"scenario", "critic", "preset"} : Labels{"scenario", "preset"};

    std::vector<std::pair<std::string, double>> columns;
    for (const auto& r : reports) {
        const std::pair<std::string, double> c{r.noise_target, r.noise_level};
        if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
    }
    std::sort(columns.begin(), columns.end());
    for (const auto& [target, level] : columns) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%s_%g%%", target.c_str(), level * 100.0);
        t.value_cols.push_back(buf);
    }

    OrderedGroups<Labels> rows;
    std::map<std::pair<Labels, std::size_t>, std::vector<const RunReport*>> cells;
    for (const auto& r : reports) {
        const Labels row = with_critic ? Labels{r.scenario, r.critic, r.preset} : Labels{r.scenario, r.preset};
        rows.at(row);
        const auto col = static_cast<std::size_t>(
            std::find(columns.begin(), columns.end(), std::make_pair(r.noise_target, r.noise_level)) -
            columns.begin());
        cells[{row, col}].push_back(&r);
    }
    for (const auto& k : rows.keys()) {
        Row row{k, {}, {}};
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto it = cells.find({k, c});
            const Metrics4 m = it == cells.end() ? Metrics4{kNaN, kNaN, kNaN, kNaN} : medians(it->second);
            row.values.push_back(m.tree_score);
            row.mae.push_back(m.mae);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// Returns the index of the best row among `members` for column col.
std::optional<std::size_t> best_in(const Table& t, const std::vector<std::size_t>& members, std::size_t col) {
    std::optional<std::size_t> best;
    for (std::size_t i : members) {
        const double v = t.rows[i].values[col];
        if (!std::isfinite(v)) continue;
        if (!best) {
            best = i;
            continue;
        }
        const double bv = t.rows[*best].values[col];
        const double m = t.rows[i].mae[col];
        const double bm = t.rows[*best].mae[col];
        if (v > bv || (v == bv && m < bm)) best = i;
    }
    return best;
}

std::set<std::pair<std::size_t, std::size_t>> best_cells(const Table& t) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < t.rows.size(); ++i) groups[t.rows[i].labels[0]].push_back(i);
    std::set<std::pair<std::size_t, std::size_t>> marks;
    for (const auto& [name, members] : groups) {
        if (t.by_column) {
            for (std::size_t c = 0; c < t.value_cols.size(); ++c) {
                if (auto b = best_in(t, members, c)) marks.insert({*b, c});
            }
        } else if (auto b = best_in(t, members, t.score_col)) {
            for (std::size_t c = 0; c < t.value_cols.size(); ++c) marks.insert({*b, c});
        }
    }
    return marks;
}

void write_csv(const Table& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    std::string header;
    for (const auto& c : t.label_cols) header += csv_field(c) + ",";
    for (const auto& c : t.value_cols) header += csv_field(c) + ",";
    header.pop_back();
    out << header << '\n';
    for (const auto& row : t.rows) {
        std::string line;
        for (const auto& l : row.labels) line += csv_field(l) + ",";
        for (double v : row.values) line += fixed3(v) + ",";
        line.pop_back();
        out << line << '\n';
    }
}

void write_summary(const std::vector<Table>& tables, const std::vector<RunReport>& reports,
                   const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    std::size_t failed = 0;
    for (const auto& r : reports) failed += r.ok() ? 0 : 1;
    out << "cells: " << reports.size() << "  failed: " << failed << "\n";
    out << "'*' marks the best cell per group (highest tree_score, lowest mae on ties)\n";
    for (const auto& t : tables) {
        const auto marks = best_cells(t);
        out << "\n" << t.title << "\n";
        std::vector<std::size_t> width;
        for (const auto& c : t.label_cols) width.push_back(c.size());
        for (const auto& row : t.rows) {
            for (std::size_t k = 0; k < row.labels.size(); ++k) width[k] = std::max(width[k], row.labels[k].size());
        }
        auto pad = [](std::string s, std::size_t w) {
            s.resize(std::max(w, s.size()), ' ');
            return s;
        };
        std::string line;
        for (std::size_t k = 0; k < t.label_cols.size(); ++k) line += pad(t.label_cols[k], width[k]) + "  ";
        for (const auto& c : t.value_cols) line += pad(c, 12);
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << "\n";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            line.clear();
            for (std::size_t k = 0; k < t.rows[i].labels.size(); ++k) line += pad(t.rows[i].labels[k], width[k]) + "  ";
            for (std::size_t c = 0; c < t.value_cols.size(); ++c) {
                std::string v = fixed3(t.rows[i].values[c]);
                if (v.empty()) v = "-";
                if (marks.count({i, c})) v += "*";
                line += pad(v, 12);
            }
            while (!line.empty() && line.back() == ' ') line.pop_back();
            out << line << "\n";
        }
    }
    if (failed > 0) {
        out << "\nfailed cells\n";
        for (const auto& r : reports) {
            if (!r.ok()) out << "  " << r.key() << ": " << *r.failure << "\n";
        }
    }
}

}  // namespace

json to_json(const RunReport& r) {
    json doc = {
        {"key", r.key()},
        {"scenario", r.scenario},
        {"preset", r.preset},
        {"critic", r.critic},
        {"variant", std::string(1, r.variant)},
        {"noise_target", r.noise_target},
        {"noise_level", r.noise_level},
        {"repeat", r.repeat},
        {"data_seed", r.data_seed},
        {"engine_seed", r.engine_seed},
    };
    if (r.ok()) {
        doc["mae"] = number_or_null(r.mae);
        doc["mse"] = number_or_null(r.mse);
        doc["r2"] = number_or_null(r.r2);
        doc["tree_score"] = number_or_null(r.tree_score);
        doc["best_equation"] = r.best_equation;
        doc["generations_used"] = r.generations_used;
        doc["critic_calls"] = r.critic_calls;
        doc["critic_failures"] = r.critic_failures;
    } else {
        doc["failure"] = *r.failure;
    }
    return doc;
}

std::vector<std::filesystem::path> render_tables(std::vector<RunReport> reports, const std::filesystem::path& out_dir,
                                                 bool noise_experiment) {
    std::filesystem::create_directories(out_dir);
    std::sort(reports.begin(), reports.end(),
              [](const RunReport& a, const RunReport& b) { return a.key() < b.key(); });

    std::vector<std::filesystem::path> written;
    const auto jsonl = out_dir / "reports.jsonl";
    {
        std::ofstream out(jsonl, std::ios::binary);
        for (const auto& r : reports) out << to_json(r).dump() << '\n';
    }
    written.push_back(jsonl);

    const auto timings = out_dir / "timings.csv";
    {
        std::ofstream out(timings, std::ios::binary);
        out << "key,wall_time_s\n";
        for (const auto& r : reports) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", r.wall_time);
            out << csv_field(r.key()) << "," << buf << '\n';
        }
    }
    written.push_back(timings);

    std::vector<Table> tables;
    if (noise_experiment) {
        tables.push_back(noise_table(reports));
    } else {
        tables.push_back(benchmark_table(reports));
        const bool any_critic = std::any_of(reports.begin(), reports.end(),
                                            [](const RunReport& r) { return r.critic != "null"; });
        if (any_critic) tables.push_back(prompt_table(reports));
    }
    for (const auto& t : tables) {
        write_csv(t, out_dir / t.file);
        written.push_back(out_dir / t.file);
    }
    write_summary(tables, reports, out_dir / "summary.txt");
    written.push_back(out_dir / "summary.txt");
    return written;
}

}  // namespace pisr
