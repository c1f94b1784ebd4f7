#include <stdexcept>

#include "pisr/critic.hpp"

namespace pisr {

namespace {

constexpr std::string_view kPromptHead =
    "\n"
    "### ROLE\n"
    "You are an expert *scientific-reasoning* assistant.\n"
    "Return **ONLY** a Python-style list:\n"
    "[dim_corr, simp, sim, \"feedback\"].\n"
    "\n"
    "### METRICS\n"
    "dim_corr . 0 (wrong) -> 1 (perfect)\n"
    "simp     . 0 (complex) -> 1 (simple)\n"
    "sim      . 0 (unrealistic) -> 1 (realistic)\n"
    "\n"
    "\n"
    "### FEW-SHOT EXAMPLES\n"
    "#1  Equation:  x = v0 * t + 0.5 * g * t^2  \n"
    "    Output:    [0.95, 0.80, 0.92, \"Classic kinematics\"]\n"
    "#2  Equation:  E = m + c  \n"
    "    Output:    [0.05, 0.70, 0.15, \"Units mismatch\"]\n"
    "#3  Equation:  y = sin(sin(x))  \n"
    "    Output:    [0.90, 0.10, 0.40, \"Needless nesting\"]\n"
    "\n"
    "### TASK\n"
    "Equation to evaluate:\n";

constexpr std::string_view kPromptTail = "\n\nThink step-by-step silently, then output the list only.\n";

}  // namespace

char variant_letter(PromptVariant v) noexcept { return static_cast<char>('A' + static_cast<int>(v)); }

PromptVariant variant_from_letter(std::string_view s) {
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'H') {
        return static_cast<PromptVariant>(s[0] - 'A');
    }
    throw std::invalid_argument("prompt variant must be one of A..H, got '" + std::string(s) + "'");
}

bool includes_variables(PromptVariant v) noexcept {
    return v == PromptVariant::B || v == PromptVariant::E || v == PromptVariant::F || v == PromptVariant::H;
}

bool includes_experiment(PromptVariant v) noexcept {
    return v == PromptVariant::C || v == PromptVariant::E || v == PromptVariant::G || v == PromptVariant::H;
}

bool includes_ground_truth(PromptVariant v) noexcept {
    return v == PromptVariant::D || v == PromptVariant::F || v == PromptVariant::G || v == PromptVariant::H;
}

PromptContext make_prompt_context(PromptVariant variant, const ScenarioSpec& scenario) {
    PromptContext ctx;
    ctx.variant = variant;
    if (includes_variables(variant)) {
        std::string text;
        for (std::size_t i = 0; i < scenario.schema.size(); ++i) {
            text += "- " + scenario.schema.names[i] + " [" + scenario.schema.units[i] + "]: " +
                    scenario.schema.descriptions[i] + "\n";
        }
        text += "- y [" + scenario.target_unit + "]: target quantity";
        ctx.variable_descriptions = std::move(text);
    }
    if (includes_experiment(variant)) {
        ctx.experiment_description = scenario.description;
    }
    if (includes_ground_truth(variant)) {
        ctx.gt_formula = "y = " + render(scenario.gt_tree, scenario.schema);
    }
    return ctx;
}

std::string context_text(const PromptContext& ctx) {
    std::string out;
    auto append = [&out](std::string_view block) {
        if (!out.empty()) out += '\n';
        out += block;
    };
    if (includes_variables(ctx.variant) && !ctx.variable_descriptions.empty()) {
        append("Variables:\n" + ctx.variable_descriptions);
    }
    if (includes_experiment(ctx.variant) && !ctx.experiment_description.empty()) {
        append("Experiment description: " + ctx.experiment_description);
    }
    if (includes_ground_truth(ctx.variant) && !ctx.gt_formula.empty()) {
        append("Ground-truth equation: " + ctx.gt_formula);
    }
    return out;
}

std::string build_prompt(std::string_view equation, const PromptContext& ctx) {
    if (equation.empty()) {
        throw std::invalid_argument("equation must not be empty");
    }
    const std::string context = context_text(ctx);
    std::string prompt(kPromptHead);
    prompt += equation;
    prompt += "\n\n";
    if (!context.empty()) {
        prompt += "Context:\n";
        prompt += context;
    }
    prompt += kPromptTail;
    return prompt;
}

}  // namespace pisr
