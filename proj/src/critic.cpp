#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "pisr/critic.hpp"
#include "pisr/tree_metric.hpp"
#include "pisr/units.hpp"

#include <httplib.h>
#include <json.hpp>

namespace pisr {

using nlohmann::json;

namespace {

constexpr double kMockSizeScale = 31.0;
constexpr double kMockViolationPenalty = 0.25;

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw CriticTransportError("endpoint URL needs a scheme: " + url);
    }
    if (url.compare(0, scheme_end, "http") != 0) {
        throw CriticTransportError("only plain http endpoints are supported: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    UrlParts parts;
    parts.origin = url.substr(0, path_begin);
    if (path_begin != std::string::npos) {
        parts.prefix = url.substr(path_begin);
        while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
    }
    return parts;
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string post_chat(const LlmEndpoint& endpoint, const std::string& body) {
    const UrlParts url = split_url(endpoint.base_url);
    httplib::Client client(url.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!endpoint.token_env.empty()) {
        if (const char* token = std::getenv(endpoint.token_env.c_str()); token && *token) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }
    auto res = client.Post(url.prefix + "/v1/chat/completions", headers, body, "application/json");
    if (!res) {
        throw CriticTransportError("request to " + endpoint.base_url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw CriticTransportError("endpoint returned HTTP " + std::to_string(res->status));
    }
    return res->body;
}

}  // namespace

std::string chat_request_body(const LlmEndpoint& endpoint, std::string_view prompt) {
    json body = {
        {"model", endpoint.model_name},
        {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
        {"temperature", LlmEndpoint::temperature},
        {"max_tokens", endpoint.max_tokens},
    };
    return body.dump();
}

std::string chat_response_content(std::string_view body) {
    const json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) {
        throw CriticParseError("endpoint response is not JSON", std::string(body));
    }
    const json* content = nullptr;
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
        const json& choice = doc["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            content = &choice["message"]["content"];
        }
    }
    if (content == nullptr) {
        throw CriticParseError("endpoint response has no choices[0].message.content", std::string(body));
    }
    return content->get<std::string>();
}

VerdictCache::VerdictCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    std::string line;
    while (std::getline(in, line)) {
        const json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) continue;
        try {
            CriticVerdict v = make_verdict(doc.at("dim_corr").get<double>(), doc.at("simp").get<double>(),
                                           doc.at("sim").get<double>(), doc.value("feedback", std::string{}));
            entries_[doc.at("key").get<std::string>()] = std::move(v);
        } catch (const json::exception&) {
            // malformed line; skip it
        }
    }
}

std::optional<CriticVerdict> VerdictCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) {
        return it->second;
    }
    return std::nullopt;
}

void VerdictCache::store(const std::string& key, const CriticVerdict& verdict, std::string_view model) {
    std::lock_guard lock(mutex_);
    entries_[key] = verdict;
    if (!path_) return;
    json line = {
        {"key", key},
        {"dim_corr", verdict.dim_corr},
        {"simp", verdict.simp},
        {"sim", verdict.sim},
        {"feedback", verdict.feedback},
        {"model", std::string(model)},
        {"timestamp", iso_timestamp()},
    };
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    out << line.dump() << '\n';
}

std::size_t VerdictCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::string cache_key(const ExpressionTree& equation, PromptVariant variant, std::string_view model) {
    return canonical_key(equation) + "|" + variant_letter(variant) + "|" + std::string(model);
}

CriticVerdict score(const ExpressionTree& equation, const VariableSchema& schema, const PromptContext& ctx,
                    const LlmEndpoint& endpoint, VerdictCache& cache) {
    const std::string key = cache_key(equation, ctx.variant, endpoint.model_name);
    if (auto hit = cache.find(key)) {
        return *hit;
    }
    const std::string prompt = build_prompt("y = " + render(equation, schema), ctx);
    const std::string body = chat_request_body(endpoint, prompt);

    auto backoff = endpoint.initial_backoff;
    const int attempts = 1 + std::max(0, endpoint.max_retries);
    for (int attempt = 1;; ++attempt) {
        try {
            CriticVerdict v = parse_verdict(chat_response_content(post_chat(endpoint, body)));
            cache.store(key, v, endpoint.model_name);
            return v;
        } catch (const CriticError&) {
            if (attempt >= attempts) throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

CriticVerdict mock_score(const ExpressionTree& equation, const ScenarioSpec& scenario) {
    const int violations = count_unit_violations(equation, scenario.schema, scenario.target_unit);
    const double dim_corr = std::max(0.0, 1.0 - kMockViolationPenalty * violations);
    const double simp = std::max(0.0, 1.0 - static_cast<double>(equation.size()) / kMockSizeScale);
    const double sim = tree_score(equation, scenario.gt_tree, TreeDistanceConfig{0.5, true});
    std::string feedback = violations == 0 ? "Units consistent"
                                           : std::to_string(violations) + " unit violation" +
                                                 (violations == 1 ? "" : "s");
    return make_verdict(dim_corr, simp, sim, std::move(feedback));
}

CriticVerdict NullCritic::score(const ExpressionTree&) {
    return make_verdict(0.5, 0.5, 0.5, "");
}

LlmCritic::LlmCritic(LlmEndpoint endpoint, PromptContext ctx, VariableSchema schema,
                     std::shared_ptr<VerdictCache> cache)
    : endpoint_(std::move(endpoint)), ctx_(std::move(ctx)), schema_(std::move(schema)), cache_(std::move(cache)) {
    if (!cache_) cache_ = std::make_shared<VerdictCache>();
}

CriticVerdict LlmCritic::score(const ExpressionTree& equation) {
    return pisr::score(equation, schema_, ctx_, endpoint_, *cache_);
}

}  // namespace pisr
