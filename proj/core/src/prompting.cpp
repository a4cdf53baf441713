#include "xrec/prompting.hpp"

#include <algorithm>

namespace xrec::prompting {

namespace {

constexpr std::string_view kKarTemplate =
    "Introduce {item}, {item description} and describe its attributes precisely (including but "
    "not limited to {scenario-specific factors})";

constexpr std::string_view kKarFactorsTemplate =
    "List the importance factors or features that determine whether a user will be interested "
    "in {category}.";

constexpr std::string_view kLlmRecTemplate =
    "The description of an item is as follows: {item description}, what else should I say if I "
    "want to recommend it to others?";

constexpr std::string_view kRecGpt4vTemplate = "What's in this image?";

constexpr std::string_view kCotTemplate =
    "The item description is as follows: {item description}. Please think step by step and "
    "describe this item based on both the description and the input image. Your response should "
    "highlight how combining both the text and image provides a comprehensive understanding of "
    "the item.";

constexpr std::string_view kVisualOnlyTemplate = "Describe the image.";

constexpr std::string_view kVisualTextualTemplate =
    "The item description is as follows: {item description}. Please describe this item based on "
    "both the description and the input image. Your response should highlight how combining both "
    "the text and image provides a comprehensive understanding of the item.";

constexpr std::string_view kXrSeparateFuseTemplate =
    "This is the item description: {R_text}. This is the description of the item image: "
    "{R_image}. Evaluate whether the information presented in the item description and the image "
    "description are supportive of each other or if there are any discrepancies. If any "
    "conflicts are identified, please address these conflicts.";

constexpr std::string_view kXrCombinedTemplate =
    "Please provide a summary of the item characteristics based on the provided text description "
    "and image. The item description is as follows: {item description}. Evaluate whether the "
    "information presented in the text and the image are supportive of each other or if there "
    "are any discrepancies. If any conflicts are identified, please address these conflicts.";

constexpr std::string_view kKeywordInstruction = "Respond with unique keywords only.";

constexpr std::string_view kDefaultKarFactors =
    "functionality, user interface, user experience, performance, compatibility, cost, security, "
    "support and documentation, customizability, scalability, reliability, updates and "
    "maintenance, reputation and reviews, and accessibility";

constexpr std::array<std::string_view, 6> kPlaceholders = {
    "{item description}", "{R_text}", "{R_image}", "{item}", "{scenario-specific factors}",
    "{category}",
};

std::string substitute(std::string text, std::string_view placeholder, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

bool has_unresolved_placeholder(std::string_view text) {
    return std::any_of(kPlaceholders.begin(), kPlaceholders.end(), [&](std::string_view p) {
        return text.find(p) != std::string_view::npos;
    });
}

RenderedPrompt finish(Strategy strategy, std::string text, const corpus::Item* item) {
    RenderedPrompt out;
    out.strategy = strategy;
    out.text = std::move(text);
    if (strategy_needs_image(strategy)) {
        if (item == nullptr || item->image_ref.empty()) {
            throw MissingImage("strategy " + std::string(strategy_tag(strategy)) +
                               " requires an item image");
        }
        out.image_ref = item->image_ref;
    }
    out.placeholders_resolved = !has_unresolved_placeholder(out.text);
    return out;
}

}  // namespace

PromptOptions::PromptOptions() : kar_factors(kDefaultKarFactors) {}

std::string_view default_kar_factors() { return kDefaultKarFactors; }

std::string_view strategy_tag(Strategy s) {
    switch (s) {
        case Strategy::kar: return "kar";
        case Strategy::kar_factors: return "kar_factors";
        case Strategy::llm_rec: return "llm_rec";
        case Strategy::rec_gpt4v: return "rec_gpt4v";
        case Strategy::cot: return "cot";
        case Strategy::visual_only: return "visual_only";
        case Strategy::visual_textual: return "visual_textual";
        case Strategy::xr_separate_fuse: return "xr_separate_fuse";
        case Strategy::xr_combined: return "xr_combined";
        case Strategy::xr_keyword_separate: return "xr_keyword_separate";
        case Strategy::xr_keyword_combined: return "xr_keyword_combined";
    }
    return "";
}

std::optional<Strategy> strategy_from_tag(std::string_view tag) {
    for (Strategy s : kAllStrategies) {
        if (strategy_tag(s) == tag) return s;
    }
    return std::nullopt;
}

bool strategy_needs_image(Strategy s) {
    switch (s) {
        case Strategy::rec_gpt4v:
        case Strategy::cot:
        case Strategy::visual_only:
        case Strategy::visual_textual:
        case Strategy::xr_combined:
        case Strategy::xr_keyword_combined:
            return true;
        case Strategy::kar:
        case Strategy::kar_factors:
        case Strategy::llm_rec:
        case Strategy::xr_separate_fuse:
        case Strategy::xr_keyword_separate:
            return false;
    }
    return false;
}

std::string_view template_text(Strategy s) {
    static const std::string kXrKeywordSeparate =
        std::string(kXrSeparateFuseTemplate) + " " + std::string(kKeywordInstruction);
    static const std::string kXrKeywordCombined =
        std::string(kXrCombinedTemplate) + " " + std::string(kKeywordInstruction);
    switch (s) {
        case Strategy::kar: return kKarTemplate;
        case Strategy::kar_factors: return kKarFactorsTemplate;
        case Strategy::llm_rec: return kLlmRecTemplate;
        case Strategy::rec_gpt4v: return kRecGpt4vTemplate;
        case Strategy::cot: return kCotTemplate;
        case Strategy::visual_only: return kVisualOnlyTemplate;
        case Strategy::visual_textual: return kVisualTextualTemplate;
        case Strategy::xr_separate_fuse: return kXrSeparateFuseTemplate;
        case Strategy::xr_combined: return kXrCombinedTemplate;
        case Strategy::xr_keyword_separate: return kXrKeywordSeparate;
        case Strategy::xr_keyword_combined: return kXrKeywordCombined;
    }
    return "";
}

RenderedPrompt render(Strategy strategy,
                      const corpus::Item& item,
                      const std::optional<Intermediates>& intermediates,
                      const PromptOptions& options) {
    std::string text(template_text(strategy));
    switch (strategy) {
        case Strategy::kar:
            text = substitute(std::move(text), "{item}", item.title);
            text = substitute(std::move(text), "{item description}", item.description);
            text = substitute(std::move(text), "{scenario-specific factors}", options.kar_factors);
            break;
        case Strategy::kar_factors:
            // The item's title stands in for the category name.
            text = substitute(std::move(text), "{category}", item.title);
            break;
        case Strategy::llm_rec:
        case Strategy::cot:
        case Strategy::visual_textual:
        case Strategy::xr_combined:
        case Strategy::xr_keyword_combined:
            text = substitute(std::move(text), "{item description}", item.description);
            break;
        case Strategy::rec_gpt4v:
        case Strategy::visual_only:
            break;
        case Strategy::xr_separate_fuse:
        case Strategy::xr_keyword_separate:
            if (!intermediates) {
                throw MissingIntermediate("strategy " + std::string(strategy_tag(strategy)) +
                                          " requires intermediate responses");
            }
            text = substitute(std::move(text), "{R_text}", intermediates->r_text);
            text = substitute(std::move(text), "{R_image}", intermediates->r_image);
            break;
    }
    return finish(strategy, std::move(text), &item);
}

std::pair<RenderedPrompt, RenderedPrompt> render_separate_stage1(const corpus::Item& item,
                                                                 const PromptOptions& options) {
    RenderedPrompt image_prompt = render(Strategy::visual_only, item, std::nullopt, options);

    RenderedPrompt text_prompt;
    if (options.omit_l_text) {
        text_prompt.strategy = Strategy::llm_rec;
        text_prompt.pass_through = true;
        text_prompt.text = item.description;
        text_prompt.placeholders_resolved = true;
    } else {
        text_prompt = render(Strategy::llm_rec, item, std::nullopt, options);
    }
    return {std::move(text_prompt), std::move(image_prompt)};
}

RenderedPrompt keyword_variant(const RenderedPrompt& prompt) {
    Strategy target;
    switch (prompt.strategy) {
        case Strategy::xr_separate_fuse:
        case Strategy::xr_keyword_separate:
            target = Strategy::xr_keyword_separate;
            break;
        case Strategy::xr_combined:
        case Strategy::xr_keyword_combined:
            target = Strategy::xr_keyword_combined;
            break;
        default:
            throw InvalidStrategy("keyword variant applies only to cross-reflection prompts, got " +
                                  std::string(strategy_tag(prompt.strategy)));
    }
    RenderedPrompt out = prompt;
    out.strategy = target;
    std::string suffix = " " + std::string(kKeywordInstruction);
    if (out.text.size() < suffix.size() ||
        out.text.compare(out.text.size() - suffix.size(), suffix.size(), suffix) != 0) {
        out.text += suffix;
    }
    return out;
}

RenderedPrompt kar_factor_prompt(const std::string& category) {
    if (category.empty()) {
        throw ValidationError("category must be nonempty");
    }
    std::string text = substitute(std::string(kKarFactorsTemplate), "{category}", category);
    RenderedPrompt out;
    out.strategy = Strategy::kar_factors;
    out.text = std::move(text);
    out.placeholders_resolved = !has_unresolved_placeholder(out.text);
    return out;
}

}  // namespace xrec::prompting
