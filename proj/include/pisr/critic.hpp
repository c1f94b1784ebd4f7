#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

#include "pisr/expression.hpp"
#include "pisr/physlab.hpp"

namespace pisr {

// ---------------------------------------------------------------------------
// Prompt construction

// A: no context. B: variable descriptions. C: experiment description.
// D: ground-truth formula. E = B+C, F = B+D, G = C+D, H = B+C+D.
enum class PromptVariant { A, B, C, D, E, F, G, H };

char variant_letter(PromptVariant v) noexcept;
PromptVariant variant_from_letter(std::string_view s);
bool includes_variables(PromptVariant v) noexcept;
bool includes_experiment(PromptVariant v) noexcept;
bool includes_ground_truth(PromptVariant v) noexcept;

struct PromptContext {
    PromptVariant variant = PromptVariant::A;
    std::string variable_descriptions;
    std::string experiment_description;
    std::string gt_formula;
};

// Fills every optional component the variant asks for from the scenario.
PromptContext make_prompt_context(PromptVariant variant, const ScenarioSpec& scenario);

// The context block body (without the "Context:" label); empty for variant A.
std::string context_text(const PromptContext& ctx);

std::string build_prompt(std::string_view equation, const PromptContext& ctx);

// ---------------------------------------------------------------------------
// Verdicts

struct CriticVerdict {
    double dim_corr = 0.0;  // dimensional consistency
    double simp = 0.0;      // simplicity
    double sim = 0.0;       // physical realism
    std::string feedback;
    double c = 1.0;         // 1 - mean of the three scores; lower is better
    bool clamped = false;
    bool extra_text = false;
};

double aggregate_scores(double dim_corr, double simp, double sim) noexcept;
CriticVerdict make_verdict(double dim_corr, double simp, double sim, std::string feedback);

class CriticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CriticParseError : public CriticError {
public:
    CriticParseError(const std::string& message, std::string raw);
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class CriticTransportError : public CriticError {
public:
    using CriticError::CriticError;
};

/// Extracts the first well-formed [num, num, num, "text"] list in raw.
/// Scores outside [0, 1] are clamped and flagged; surrounding prose is
/// tolerated and flagged. Throws CriticParseError when no list is found.
CriticVerdict parse_verdict(std::string_view raw);

// ---------------------------------------------------------------------------
// LLM endpoint, cache and scoring

struct LlmEndpoint {
    std::string base_url;   // e.g. http://127.0.0.1:8080
    std::string model_name;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;
    std::chrono::milliseconds initial_backoff{250};
    std::string token_env;  // name of the variable holding a bearer token
    int max_tokens = 256;
    // Sampling temperature is always zero and not configurable.
    static constexpr double temperature = 0.0;
};

std::string chat_request_body(const LlmEndpoint& endpoint, std::string_view prompt);
// choices[0].message.content; CriticParseError when absent.
std::string chat_response_content(std::string_view body);

/// Verdict cache persisted as JSON lines. Safe for concurrent use.
class VerdictCache {
public:
    VerdictCache() = default;
    // Loads existing entries from path and appends new ones to it.
    explicit VerdictCache(std::filesystem::path path);

    std::optional<CriticVerdict> find(const std::string& key) const;
    void store(const std::string& key, const CriticVerdict& verdict, std::string_view model);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::unordered_map<std::string, CriticVerdict> entries_;
};

std::string cache_key(const ExpressionTree& equation, PromptVariant variant, std::string_view model);

/// Queries the endpoint unless the cache already holds the verdict.
/// Transport and parse failures are retried with exponential backoff.
CriticVerdict score(const ExpressionTree& equation, const VariableSchema& schema, const PromptContext& ctx,
                    const LlmEndpoint& endpoint, VerdictCache& cache);

/// Rule-based offline critic: unit consistency, size and structural
/// similarity to the scenario's ground truth.
CriticVerdict mock_score(const ExpressionTree& equation, const ScenarioSpec& scenario);

// ---------------------------------------------------------------------------
// Critic handles consumed by the search engine

class Critic {
public:
    virtual ~Critic() = default;
    virtual CriticVerdict score(const ExpressionTree& equation) = 0;
    virtual std::string label() const = 0;
    virtual bool is_null() const { return false; }
};

class NullCritic final : public Critic {
public:
    CriticVerdict score(const ExpressionTree&) override;
    std::string label() const override { return "null"; }
    bool is_null() const override { return true; }
};

class MockCritic final : public Critic {
public:
    explicit MockCritic(ScenarioSpec scenario) : scenario_(std::move(scenario)) {}
    CriticVerdict score(const ExpressionTree& equation) override { return mock_score(equation, scenario_); }
    std::string label() const override { return "mock"; }

private:
    ScenarioSpec scenario_;
};

class LlmCritic final : public Critic {
public:
    LlmCritic(LlmEndpoint endpoint, PromptContext ctx, VariableSchema schema,
              std::shared_ptr<VerdictCache> cache = std::make_shared<VerdictCache>());
    CriticVerdict score(const ExpressionTree& equation) override;
    std::string label() const override { return endpoint_.model_name.empty() ? "llm" : endpoint_.model_name; }

private:
    LlmEndpoint endpoint_;
    PromptContext ctx_;
    VariableSchema schema_;
    std::shared_ptr<VerdictCache> cache_;
};

}  // namespace pisr
