#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "pisr/critic.hpp"

namespace pisr {

namespace {

struct Cursor {
    std::string_view s;
    std::size_t i = 0;

    void skip_ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool eat(char c) {
        skip_ws();
        if (i < s.size() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
};

std::optional<double> read_number(Cursor& cur) {
    cur.skip_ws();
    std::size_t start = cur.i;
    if (start < cur.s.size() && cur.s[start] == '+') ++start;
    double v = 0.0;
    const char* first = cur.s.data() + start;
    const char* last = cur.s.data() + cur.s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first || !std::isfinite(v)) {
        return std::nullopt;
    }
    cur.i = static_cast<std::size_t>(ptr - cur.s.data());
    return v;
}

std::optional<std::string> read_string(Cursor& cur) {
    cur.skip_ws();
    if (cur.i >= cur.s.size() || (cur.s[cur.i] != '"' && cur.s[cur.i] != '\'')) {
        return std::nullopt;
    }
    const char quote = cur.s[cur.i++];
    std::string out;
    while (cur.i < cur.s.size()) {
        const char c = cur.s[cur.i++];
        if (c == quote) {
            return out;
        }
        if (c == '\\' && cur.i < cur.s.size()) {
            const char e = cur.s[cur.i++];
            switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            default: out += e; break;
            }
            continue;
        }
        out += c;
    }
    return std::nullopt;
}

struct Match {
    double values[3];
    std::string feedback;
    std::size_t begin;
    std::size_t end;
};

std::optional<Match> list_at(std::string_view raw, std::size_t open) {
    Cursor cur{raw, open + 1};
    Match m{};
    m.begin = open;
    for (int k = 0; k < 3; ++k) {
        const auto v = read_number(cur);
        if (!v || !cur.eat(',')) {
            return std::nullopt;
        }
        m.values[k] = *v;
    }
    auto text = read_string(cur);
    if (!text) {
        return std::nullopt;
    }
    cur.eat(',');  // tolerate a trailing comma
    if (!cur.eat(']')) {
        return std::nullopt;
    }
    m.feedback = std::move(*text);
    m.end = cur.i;
    return m;
}

bool has_text(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return !std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

CriticParseError::CriticParseError(const std::string& message, std::string raw)
    : CriticError(message), raw_(std::move(raw)) {}

double aggregate_scores(double dim_corr, double simp, double sim) noexcept {
    return 1.0 - (dim_corr + simp + sim) / 3.0;
}

CriticVerdict make_verdict(double dim_corr, double simp, double sim, std::string feedback) {
    CriticVerdict v;
    const double raw[3] = {dim_corr, simp, sim};
    double clamped[3];
    for (int k = 0; k < 3; ++k) {
        clamped[k] = std::clamp(raw[k], 0.0, 1.0);
        if (clamped[k] != raw[k]) v.clamped = true;
    }
    v.dim_corr = clamped[0];
    v.simp = clamped[1];
    v.sim = clamped[2];
    v.feedback = std::move(feedback);
    v.c = aggregate_scores(v.dim_corr, v.simp, v.sim);
    return v;
}

CriticVerdict parse_verdict(std::string_view raw) {
    for (std::size_t open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
        auto m = list_at(raw, open);
        if (!m) {
            continue;
        }
        CriticVerdict v = make_verdict(m->values[0], m->values[1], m->values[2], std::move(m->feedback));
        v.extra_text = has_text(raw.substr(0, m->begin)) || has_text(raw.substr(m->end));
        return v;
    }
    throw CriticParseError("critic response contains no [dim_corr, simp, sim, \"feedback\"] list",
                           std::string(raw));
}

}  // namespace pisr
