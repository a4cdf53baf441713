#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "xrec/corpus.hpp"
#include "xrec/errors.hpp"

namespace xrec::prompting {

enum class Strategy {
    kar,
    kar_factors,
    llm_rec,
    rec_gpt4v,
    cot,
    visual_only,
    visual_textual,
    xr_separate_fuse,
    xr_combined,
    xr_keyword_separate,
    xr_keyword_combined,
};

inline constexpr std::array<Strategy, 11> kAllStrategies = {
    Strategy::kar,          Strategy::kar_factors,       Strategy::llm_rec,
    Strategy::rec_gpt4v,    Strategy::cot,               Strategy::visual_only,
    Strategy::visual_textual, Strategy::xr_separate_fuse, Strategy::xr_combined,
    Strategy::xr_keyword_separate, Strategy::xr_keyword_combined,
};

std::string_view strategy_tag(Strategy s);
std::optional<Strategy> strategy_from_tag(std::string_view tag);
bool strategy_needs_image(Strategy s);

// The catalog template for a strategy, placeholders unresolved. These strings
// are pinned byte-for-byte by the golden files under prompts/v1/.
std::string_view template_text(Strategy s);

struct RenderedPrompt {
    Strategy strategy = Strategy::visual_only;
    std::string text;
    std::string image_ref;        // empty for text-only strategies
    bool pass_through = false;    // stage-1 text prompt when the text model is omitted
    bool placeholders_resolved = false;
};

struct Intermediates {
    std::string r_text;
    std::string r_image;
};

struct PromptOptions {
    // When true, the stage-1 text model is skipped and the raw item
    // description is used directly as the intermediate text response.
    bool omit_l_text = true;
    // Factor list substituted into the knowledge-augmentation template.
    std::string kar_factors;

    PromptOptions();
};

// The default factor list for software catalogs.
std::string_view default_kar_factors();

class MissingImage : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MissingIntermediate : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidStrategy : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Renders the template for `strategy` with the item's fields substituted.
// Image-requiring strategies attach item.image_ref and throw MissingImage
// when it is absent; the two-stage fuse strategies require intermediates.
RenderedPrompt render(Strategy strategy,
                      const corpus::Item& item,
                      const std::optional<Intermediates>& intermediates = std::nullopt,
                      const PromptOptions& options = {});

// Stage 1 of separate prompting: the text-augmentation prompt (or a
// pass-through marker when the text model is omitted) and the image
// description prompt.
std::pair<RenderedPrompt, RenderedPrompt> render_separate_stage1(const corpus::Item& item,
                                                                 const PromptOptions& options = {});

// Appends the keyword-only instruction to a cross-reflection prompt.
// Idempotent; rejects non-cross-reflection strategies.
RenderedPrompt keyword_variant(const RenderedPrompt& prompt);

// The factor-elicitation prompt; the category is inserted verbatim.
RenderedPrompt kar_factor_prompt(const std::string& category);

}  // namespace xrec::prompting
