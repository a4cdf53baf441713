#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xrec/corpus.hpp"
#include "xrec/errors.hpp"
#include "xrec/prompting.hpp"

namespace xrec::gateway {

struct BackendConfig {
    std::string endpoint_url;  // "mock://deterministic" selects the offline backend
    std::string model_id;
    std::string api_key_env;
    double temperature = 0.0;
    int max_tokens = 512;
    int timeout_s = 30;
    int max_retries = 3;
    int parallelism = 1;
    // Exponential backoff base; factor 2 with +/-20% jitter. Tests shrink it.
    int backoff_base_ms = 1000;

    static BackendConfig from_json_file(const std::filesystem::path& path);
};

struct EnrichmentRecord {
    std::string item_id;
    std::string strategy_tag;
    std::string model_id;
    std::string prompt_hash;
    std::string response_text;
    std::string created_at;
};

enum class ErrorKind { rate_limited, timeout, auth, malformed_response, http, network };

class GatewayError : public Error {
public:
    GatewayError(ErrorKind kind, const std::string& what, int attempts = 1)
        : Error(what), kind_(kind), attempts_(attempts) {}

    ErrorKind kind() const { return kind_; }
    int attempts() const { return attempts_; }

private:
    ErrorKind kind_;
    int attempts_;
};

std::string prompt_hash(const prompting::RenderedPrompt& prompt);

class ChatBackend {
public:
    explicit ChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {}
    virtual ~ChatBackend() = default;

    // Returns the first choice's message text. Retryable failures (429, 5xx,
    // timeouts) are retried with exponential backoff up to max_retries; auth
    // failures are not retried.
    virtual std::string complete(const prompting::RenderedPrompt& prompt,
                                 const std::string& item_id) = 0;

    const BackendConfig& config() const { return cfg_; }

protected:
    BackendConfig cfg_;
};

// Pure function of (strategy_tag, item_id, prompt_hash); counts calls and
// tracks the in-flight high-water mark so tests can assert the fan-out bound.
class MockChatBackend : public ChatBackend {
public:
    explicit MockChatBackend(BackendConfig cfg, int latency_ms = 0);

    std::string complete(const prompting::RenderedPrompt& prompt,
                         const std::string& item_id) override;

    static std::string canned_response(std::string_view strategy_tag,
                                       std::string_view item_id,
                                       std::string_view prompt_hash);

    int total_calls() const { return total_calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    void reset_counters();

private:
    int latency_ms_;
    std::atomic<int> total_calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

// OpenAI-compatible chat-completions client. Local image files are inlined as
// base64 data URIs; URLs pass through.
class HttpChatBackend : public ChatBackend {
public:
    using ChatBackend::ChatBackend;

    std::string complete(const prompting::RenderedPrompt& prompt,
                         const std::string& item_id) override;
};

std::unique_ptr<ChatBackend> make_chat_backend(const BackendConfig& cfg);

// JSON-lines store of enrichment records keyed by
// (item_id, strategy_tag, model_id, prompt_hash). Records append to the
// backing file as they arrive; save() compacts it via temp-file-then-rename.
// Corrupt lines found at load time are skipped, counted and re-fetched later.
class EnrichmentCache {
public:
    EnrichmentCache() = default;
    explicit EnrichmentCache(std::filesystem::path path);

    std::optional<EnrichmentRecord> find(const std::string& item_id,
                                         const std::string& strategy_tag,
                                         const std::string& model_id,
                                         const std::string& prompt_hash) const;
    void put(const EnrichmentRecord& record);
    void save() const;

    std::size_t size() const;
    int corrupt_lines_skipped() const { return corrupt_lines_skipped_; }
    const std::filesystem::path& path() const { return path_; }

    std::vector<EnrichmentRecord> all_records() const;
    // item_id -> strategy_tag -> record (latest wins).
    std::map<std::string, std::map<std::string, EnrichmentRecord>> by_item() const;

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, EnrichmentRecord> records_;
    std::vector<std::string> key_order_;
    int corrupt_lines_skipped_ = 0;
};

struct CompleteResult {
    std::string text;
    bool cache_hit = false;
};

// Never re-queries the backend for an identical (item, strategy, model,
// prompt_hash).
CompleteResult complete_cached(const prompting::RenderedPrompt& prompt,
                               const std::string& item_id,
                               ChatBackend& backend,
                               EnrichmentCache& cache);

struct EnrichOptions {
    prompting::PromptOptions prompts;
};

struct EnrichReport {
    std::vector<EnrichmentRecord> records;
    std::vector<std::pair<std::string, std::string>> skipped;  // (item_id, reason)
    std::vector<std::pair<std::string, std::string>> failed;   // (item_id, error)
    int cache_hits = 0;
};

// One record per (item, strategy). Per-item outcomes are journaled to the
// append-only checkpoint file; a rerun resumes, re-attempting only items not
// already done. The two-stage separate strategies orchestrate stage 1 (image
// description, plus text augmentation unless omitted) before the fuse call.
// Requests fan out over at most config().parallelism worker threads.
EnrichReport enrich_corpus(const std::vector<corpus::Item>& items,
                           prompting::Strategy strategy,
                           ChatBackend& backend,
                           EnrichmentCache& cache,
                           const std::filesystem::path& checkpoint_path,
                           const EnrichOptions& options = {});

}  // namespace xrec::gateway
