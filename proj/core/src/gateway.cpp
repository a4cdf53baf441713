#include "xrec/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "xrec/common.hpp"

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace xrec::gateway {

namespace {

std::string cache_key(const std::string& item_id,
                      const std::string& strategy_tag,
                      const std::string& model_id,
                      const std::string& prompt_hash) {
    return item_id + '\x1f' + strategy_tag + '\x1f' + model_id + '\x1f' + prompt_hash;
}

struct ParsedEndpoint {
    std::string host_and_scheme;  // e.g. "http://127.0.0.1:8080"
    std::string base_path;        // e.g. "/v1" or ""
};

ParsedEndpoint parse_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("endpoint_url must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    ParsedEndpoint out;
    if (path_start == std::string::npos) {
        out.host_and_scheme = url;
    } else {
        out.host_and_scheme = url.substr(0, path_start);
        out.base_path = url.substr(path_start);
        while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
    }
    return out;
}

std::string image_content_url(const std::string& image_ref) {
    if (image_ref.rfind("http://", 0) == 0 || image_ref.rfind("https://", 0) == 0 ||
        image_ref.rfind("data:", 0) == 0) {
        return image_ref;
    }
    // Treat anything else as a local file and inline it.
    std::string bytes;
    try {
        bytes = read_text_file(image_ref);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("cannot read image file: ") + e.what());
    }
    std::string mime = "image/jpeg";
    auto dot = image_ref.rfind('.');
    if (dot != std::string::npos) {
        std::string ext = image_ref.substr(dot + 1);
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == "png") mime = "image/png";
        else if (ext == "gif") mime = "image/gif";
        else if (ext == "webp") mime = "image/webp";
    }
    return "data:" + mime + ";base64," + base64_encode(bytes);
}

int backoff_delay_ms(int base_ms, int retry_index, std::mt19937& jitter_rng) {
    double delay = static_cast<double>(base_ms) * std::pow(2.0, retry_index);
    std::uniform_real_distribution<double> jitter(0.8, 1.2);
    return static_cast<int>(delay * jitter(jitter_rng));
}

}  // namespace

std::string prompt_hash(const prompting::RenderedPrompt& prompt) {
    std::string payload = std::string(prompting::strategy_tag(prompt.strategy)) + '\x1f' +
                          prompt.text + '\x1f' + prompt.image_ref;
    return to_hex(fnv1a64(payload));
}

BackendConfig BackendConfig::from_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path));
    BackendConfig cfg;
    cfg.endpoint_url = j.value("endpoint_url", cfg.endpoint_url);
    cfg.model_id = j.value("model_id", cfg.model_id);
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    cfg.backoff_base_ms = j.value("backoff_base_ms", cfg.backoff_base_ms);
    if (cfg.parallelism < 1 || cfg.max_retries < 0 || cfg.temperature < 0) {
        throw ValidationError("invalid backend config: " + path.string());
    }
    return cfg;
}

MockChatBackend::MockChatBackend(BackendConfig cfg, int latency_ms)
    : ChatBackend(std::move(cfg)), latency_ms_(latency_ms) {}

std::string MockChatBackend::canned_response(std::string_view strategy_tag,
                                             std::string_view item_id,
                                             std::string_view prompt_hash) {
    static constexpr std::array<std::string_view, 24> kLexicon = {
        "amber",  "basalt", "cobalt",  "drift",  "ember",   "fjord",  "garnet", "harbor",
        "indigo", "juniper", "krypton", "lattice", "meridian", "nimbus", "onyx",   "prairie",
        "quartz", "russet", "sable",   "tundra", "umber",   "vertex", "willow", "zephyr",
    };
    SplitMix64 rng(fnv1a64(strategy_tag) ^ (fnv1a64(item_id) * 0x9e3779b97f4a7c15ull) ^
                   (fnv1a64(prompt_hash) * 0xbf58476d1ce4e5b9ull));
    std::string words;
    for (int i = 0; i < 8; ++i) {
        if (i > 0) words += ' ';
        words += kLexicon[static_cast<std::size_t>(rng.next_below(kLexicon.size()))];
    }
    return "mock " + std::string(strategy_tag) + " response for " + std::string(item_id) + ": " +
           words;
}

std::string MockChatBackend::complete(const prompting::RenderedPrompt& prompt,
                                      const std::string& item_id) {
    int cur = in_flight_.fetch_add(1) + 1;
    int prev_max = max_in_flight_.load();
    while (cur > prev_max && !max_in_flight_.compare_exchange_weak(prev_max, cur)) {
    }
    if (latency_ms_ > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));
    }
    total_calls_.fetch_add(1);
    std::string out = canned_response(prompting::strategy_tag(prompt.strategy), item_id,
                                      prompt_hash(prompt));
    in_flight_.fetch_sub(1);
    return out;
}

void MockChatBackend::reset_counters() {
    total_calls_ = 0;
    in_flight_ = 0;
    max_in_flight_ = 0;
}

std::string HttpChatBackend::complete(const prompting::RenderedPrompt& prompt,
                                      const std::string& item_id) {
    (void)item_id;
    ParsedEndpoint ep = parse_endpoint(cfg_.endpoint_url);

    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt.text}});
    if (!prompt.image_ref.empty()) {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_content_url(prompt.image_ref)}}}});
    }
    json body{{"model", cfg_.model_id},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})},
              {"temperature", cfg_.temperature},
              {"max_tokens", cfg_.max_tokens}};
    std::string payload = body.dump();

    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    std::mt19937 jitter_rng(std::random_device{}());
    int attempts = 0;
    std::string last_error;
    ErrorKind last_kind = ErrorKind::network;

    while (true) {
        ++attempts;
        httplib::Client client(ep.host_and_scheme);
        client.set_connection_timeout(cfg_.timeout_s, 0);
        client.set_read_timeout(cfg_.timeout_s, 0);
        client.set_write_timeout(cfg_.timeout_s, 0);

        auto res = client.Post(ep.base_path + "/chat/completions", headers, payload,
                               "application/json");
        bool retryable = false;
        if (!res) {
            last_kind = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write
                            ? ErrorKind::timeout
                            : ErrorKind::network;
            last_error = "transport error: " + httplib::to_string(res.error());
            retryable = true;
        } else if (res->status >= 200 && res->status < 300) {
            json j = json::parse(res->body, nullptr, false);
            if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
                j["choices"].empty()) {
                throw GatewayError(ErrorKind::malformed_response,
                                   "malformed completion response", attempts);
            }
            const json& msg = j["choices"][0];
            if (msg.contains("message") && msg["message"].contains("content") &&
                msg["message"]["content"].is_string()) {
                return msg["message"]["content"].get<std::string>();
            }
            throw GatewayError(ErrorKind::malformed_response,
                               "completion response missing message content", attempts);
        } else if (res->status == 401 || res->status == 403) {
            throw GatewayError(ErrorKind::auth,
                               "authentication failed (HTTP " + std::to_string(res->status) + ")",
                               attempts);
        } else if (res->status == 429 || res->status >= 500) {
            last_kind = res->status == 429 ? ErrorKind::rate_limited : ErrorKind::http;
            last_error = "HTTP " + std::to_string(res->status);
            retryable = true;
        } else {
            throw GatewayError(ErrorKind::http,
                               "HTTP " + std::to_string(res->status) + ": " + res->body, attempts);
        }

        if (!retryable || attempts > cfg_.max_retries) {
            throw GatewayError(last_kind, last_error + " after " + std::to_string(attempts) +
                                              " attempts", attempts);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(
            backoff_delay_ms(cfg_.backoff_base_ms, attempts - 1, jitter_rng)));
    }
}

std::unique_ptr<ChatBackend> make_chat_backend(const BackendConfig& cfg) {
    if (cfg.endpoint_url.rfind("mock://", 0) == 0) {
        return std::make_unique<MockChatBackend>(cfg);
    }
    return std::make_unique<HttpChatBackend>(cfg);
}

EnrichmentCache::EnrichmentCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("item_id") ||
            !j.contains("strategy_tag") || !j.contains("model_id") || !j.contains("prompt_hash") ||
            !j.contains("response_text")) {
            ++corrupt_lines_skipped_;
            continue;
        }
        EnrichmentRecord r;
        r.item_id = j["item_id"].get<std::string>();
        r.strategy_tag = j["strategy_tag"].get<std::string>();
        r.model_id = j["model_id"].get<std::string>();
        r.prompt_hash = j["prompt_hash"].get<std::string>();
        r.response_text = j["response_text"].get<std::string>();
        r.created_at = j.value("created_at", "");
        std::string key = cache_key(r.item_id, r.strategy_tag, r.model_id, r.prompt_hash);
        auto [it, inserted] = records_.insert_or_assign(key, std::move(r));
        (void)it;
        if (inserted) key_order_.push_back(key);
    }
}

namespace {

json record_to_json(const EnrichmentRecord& r) {
    return json{{"item_id", r.item_id},
                {"strategy_tag", r.strategy_tag},
                {"model_id", r.model_id},
                {"prompt_hash", r.prompt_hash},
                {"response_text", r.response_text},
                {"created_at", r.created_at}};
}

}  // namespace

std::optional<EnrichmentRecord> EnrichmentCache::find(const std::string& item_id,
                                                      const std::string& strategy_tag,
                                                      const std::string& model_id,
                                                      const std::string& prompt_hash) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = records_.find(cache_key(item_id, strategy_tag, model_id, prompt_hash));
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void EnrichmentCache::put(const EnrichmentRecord& record) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string key = cache_key(record.item_id, record.strategy_tag, record.model_id,
                                record.prompt_hash);
    auto [it, inserted] = records_.insert_or_assign(key, record);
    (void)it;
    if (inserted) key_order_.push_back(key);

    if (!path_.empty()) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << record_to_json(record).dump() << '\n';
        out.flush();
    }
}

void EnrichmentCache::save() const {
    if (path_.empty()) return;
    std::lock_guard<std::mutex> lock(mu_);
    std::ostringstream lines;
    for (const auto& key : key_order_) {
        lines << record_to_json(records_.at(key)).dump() << '\n';
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    write_text_file_atomic(path_, lines.str());
}

std::size_t EnrichmentCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return records_.size();
}

std::vector<EnrichmentRecord> EnrichmentCache::all_records() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<EnrichmentRecord> out;
    out.reserve(key_order_.size());
    for (const auto& key : key_order_) out.push_back(records_.at(key));
    return out;
}

std::map<std::string, std::map<std::string, EnrichmentRecord>> EnrichmentCache::by_item() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::map<std::string, std::map<std::string, EnrichmentRecord>> out;
    for (const auto& key : key_order_) {
        const auto& r = records_.at(key);
        out[r.item_id][r.strategy_tag] = r;
    }
    return out;
}

CompleteResult complete_cached(const prompting::RenderedPrompt& prompt,
                               const std::string& item_id,
                               ChatBackend& backend,
                               EnrichmentCache& cache) {
    if (prompt.pass_through) {
        throw ValidationError("pass-through prompts do not reach the backend");
    }
    std::string tag(prompting::strategy_tag(prompt.strategy));
    std::string hash = prompt_hash(prompt);
    const std::string& model = backend.config().model_id;

    if (auto hit = cache.find(item_id, tag, model, hash)) {
        return CompleteResult{hit->response_text, true};
    }
    std::string text = backend.complete(prompt, item_id);
    EnrichmentRecord record{item_id, tag, model, hash, text, now_iso8601()};
    cache.put(record);
    return CompleteResult{std::move(text), false};
}

namespace {

// Append-only journal of per-item outcomes; the last line per item wins.
class CheckpointJournal {
public:
    explicit CheckpointJournal(std::filesystem::path path) : path_(std::move(path)) {
        if (path_.empty() || !std::filesystem::exists(path_)) return;
        std::ifstream in(path_, std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("item_id") || !j.contains("status")) continue;
            status_[j["item_id"].get<std::string>()] = j["status"].get<std::string>();
        }
    }

    std::string status_of(const std::string& item_id) const {
        auto it = status_.find(item_id);
        return it == status_.end() ? "" : it->second;
    }

    void record(const std::string& item_id, const std::string& status,
                const std::string& detail) {
        std::lock_guard<std::mutex> lock(mu_);
        status_[item_id] = status;
        if (path_.empty()) return;
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        json j{{"item_id", item_id}, {"status", status}};
        if (!detail.empty()) j["detail"] = detail;
        out << j.dump() << '\n';
        out.flush();
    }

private:
    std::filesystem::path path_;
    std::mutex mu_;
    std::map<std::string, std::string> status_;
};

}  // namespace

EnrichReport enrich_corpus(const std::vector<corpus::Item>& items,
                           prompting::Strategy strategy,
                           ChatBackend& backend,
                           EnrichmentCache& cache,
                           const std::filesystem::path& checkpoint_path,
                           const EnrichOptions& options) {
    using prompting::Strategy;

    CheckpointJournal journal(checkpoint_path);
    EnrichReport report;
    std::mutex report_mu;

    auto process_item = [&](const corpus::Item& item) {
        // Items already marked done resume through the cache: every call is a
        // hit and no backend request is made, so reprocessing is free.
        bool was_done = journal.status_of(item.item_id) == "done";

        bool needs_image = prompting::strategy_needs_image(strategy) ||
                           strategy == Strategy::xr_separate_fuse ||
                           strategy == Strategy::xr_keyword_separate;
        if (needs_image && item.image_ref.empty()) {
            if (journal.status_of(item.item_id) != "skipped") {
                journal.record(item.item_id, "skipped", "missing image");
            }
            std::lock_guard<std::mutex> lock(report_mu);
            report.skipped.emplace_back(item.item_id, "missing image");
            return;
        }

        try {
            prompting::RenderedPrompt final_prompt;
            if (strategy == Strategy::xr_separate_fuse ||
                strategy == Strategy::xr_keyword_separate) {
                auto [text_prompt, image_prompt] =
                    prompting::render_separate_stage1(item, options.prompts);
                auto image_result = complete_cached(image_prompt, item.item_id, backend, cache);
                std::string r_text;
                if (text_prompt.pass_through) {
                    r_text = item.description;
                } else {
                    r_text = complete_cached(text_prompt, item.item_id, backend, cache).text;
                }
                prompting::Intermediates inter{r_text, image_result.text};
                final_prompt = prompting::render(Strategy::xr_separate_fuse, item, inter,
                                                 options.prompts);
                if (strategy == Strategy::xr_keyword_separate) {
                    final_prompt = prompting::keyword_variant(final_prompt);
                }
            } else {
                final_prompt = prompting::render(strategy, item, std::nullopt, options.prompts);
            }

            auto result = complete_cached(final_prompt, item.item_id, backend, cache);
            std::string tag(prompting::strategy_tag(final_prompt.strategy));
            auto record = cache.find(item.item_id, tag, backend.config().model_id,
                                     prompt_hash(final_prompt));
            if (!was_done) journal.record(item.item_id, "done", "");
            std::lock_guard<std::mutex> lock(report_mu);
            if (result.cache_hit) ++report.cache_hits;
            if (record) report.records.push_back(*record);
        } catch (const prompting::MissingImage& e) {
            journal.record(item.item_id, "skipped", e.what());
            std::lock_guard<std::mutex> lock(report_mu);
            report.skipped.emplace_back(item.item_id, e.what());
        } catch (const std::exception& e) {
            journal.record(item.item_id, "failed", e.what());
            std::lock_guard<std::mutex> lock(report_mu);
            report.failed.emplace_back(item.item_id, e.what());
        }
    };

    std::vector<const corpus::Item*> pending;
    pending.reserve(items.size());
    for (const auto& item : items) pending.push_back(&item);

    int workers = std::max(1, backend.config().parallelism);
    if (workers == 1) {
        for (const auto* item : pending) process_item(*item);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= pending.size()) break;
                    process_item(*pending[i]);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    // Deterministic report order regardless of worker interleaving.
    auto by_id = [](const auto& a, const auto& b) { return a.first < b.first; };
    std::sort(report.skipped.begin(), report.skipped.end(), by_id);
    std::sort(report.failed.begin(), report.failed.end(), by_id);
    std::sort(report.records.begin(), report.records.end(),
              [](const EnrichmentRecord& a, const EnrichmentRecord& b) {
                  return a.item_id < b.item_id;
              });

    cache.save();
    return report;
}

}  // namespace xrec::gateway
