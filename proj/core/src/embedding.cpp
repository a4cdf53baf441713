#include "xrec/embedding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "xrec/common.hpp"

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace xrec::embedding {

namespace {

std::string store_header(const std::string& model_id, int dim) {
    return "#model_id=" + model_id + " dim=" + std::to_string(dim);
}

bool parse_store_header(const std::string& line, std::string& model_id, int& dim) {
    if (line.rfind("#model_id=", 0) != 0) return false;
    auto space = line.find(' ');
    if (space == std::string::npos) return false;
    model_id = line.substr(10, space - 10);
    if (line.compare(space + 1, 4, "dim=") != 0) return false;
    try {
        dim = std::stoi(line.substr(space + 5));
    } catch (...) {
        return false;
    }
    return dim > 0;
}

std::string format_row(const std::string& key, const std::vector<float>& values) {
    std::string out = key;
    char buf[40];
    for (float v : values) {
        // %.9g round-trips float32 exactly.
        std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
        out += buf;
    }
    return out;
}

std::vector<float> parse_row_floats(const std::string& line, std::size_t start, int expected_dim,
                                    const std::string& file, int line_no) {
    std::vector<float> values;
    if (expected_dim > 0) values.reserve(static_cast<std::size_t>(expected_dim));
    std::size_t pos = start;
    while (pos < line.size()) {
        std::size_t next = line.find(',', pos);
        std::string field = line.substr(pos, next == std::string::npos ? next : next - pos);
        char* end = nullptr;
        float v = std::strtof(field.c_str(), &end);
        if (end == field.c_str() || *end != '\0') {
            throw ParseError(file, line_no, "malformed float: " + field);
        }
        if (!std::isfinite(v)) {
            throw ParseError(file, line_no, "non-finite embedding value");
        }
        values.push_back(v);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (expected_dim > 0 && static_cast<int>(values.size()) != expected_dim) {
        throw ParseError(file, line_no,
                         "row has " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(expected_dim));
    }
    return values;
}

}  // namespace

HashEmbedder::HashEmbedder(int dim, std::string model_id)
    : dim_(dim), model_id_(std::move(model_id)) {
    if (dim_ < 1) throw ValidationError("embedder dim must be >= 1");
}

EmbeddingVector HashEmbedder::embed(const std::string& text) {
    EmbeddingVector out;
    out.model_id = model_id_;
    out.values.assign(static_cast<std::size_t>(dim_), 0.0f);
    if (text.empty()) {
        ++zero_vector_count_;
        return out;
    }
    SplitMix64 rng(fnv1a64(model_id_) ^ (fnv1a64(text) * 0x9e3779b97f4a7c15ull));
    std::vector<double> raw(static_cast<std::size_t>(dim_));
    double norm_sq = 0.0;
    for (auto& v : raw) {
        v = rng.next_double() * 2.0 - 1.0;
        norm_sq += v * v;
    }
    if (norm_sq == 0.0) {
        raw[0] = 1.0;
        norm_sq = 1.0;
    }
    double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.values[i] = static_cast<float>(raw[i] * inv_norm);
    }
    return out;
}

EmbeddingVector RemoteEmbedder::embed(const std::string& text) {
    EmbeddingVector out;
    out.model_id = cfg_.model_id;
    if (text.empty()) {
        out.values.assign(static_cast<std::size_t>(cfg_.dim), 0.0f);
        return out;
    }

    auto scheme_end = cfg_.endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("embedding endpoint_url must include a scheme");
    }
    auto path_start = cfg_.endpoint_url.find('/', scheme_end + 3);
    std::string host = path_start == std::string::npos ? cfg_.endpoint_url
                                                       : cfg_.endpoint_url.substr(0, path_start);
    std::string base = path_start == std::string::npos ? "" : cfg_.endpoint_url.substr(path_start);
    while (!base.empty() && base.back() == '/') base.pop_back();

    json body{{"model", cfg_.model_id}, {"input", json::array({text})}};
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    int attempts = 0;
    while (true) {
        ++attempts;
        httplib::Client client(host);
        client.set_connection_timeout(cfg_.timeout_s, 0);
        client.set_read_timeout(cfg_.timeout_s, 0);
        auto res = client.Post(base + "/embeddings", headers, body.dump(), "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            json j = json::parse(res->body, nullptr, false);
            if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() ||
                j["data"].empty() || !j["data"][0].contains("embedding")) {
                throw gateway::GatewayError(gateway::ErrorKind::malformed_response,
                                            "malformed embedding response", attempts);
            }
            out.values = j["data"][0]["embedding"].get<std::vector<float>>();
            if (static_cast<int>(out.values.size()) != cfg_.dim) {
                throw ValidationError("embedding dim mismatch: backend declared " +
                                      std::to_string(cfg_.dim) + ", got " +
                                      std::to_string(out.values.size()));
            }
            return out;
        }
        bool retryable = !res || res->status == 429 || res->status >= 500;
        if (res && (res->status == 401 || res->status == 403)) {
            throw gateway::GatewayError(gateway::ErrorKind::auth, "authentication failed",
                                        attempts);
        }
        if (!retryable || attempts > cfg_.max_retries) {
            throw gateway::GatewayError(
                gateway::ErrorKind::http,
                "embedding request failed after " + std::to_string(attempts) + " attempts",
                attempts);
        }
        std::this_thread::sleep_for(
            std::chrono::milliseconds(cfg_.backoff_base_ms * (1 << (attempts - 1))));
    }
}

CachedEmbedder::CachedEmbedder(std::filesystem::path store_path, EmbeddingBackend& backend)
    : path_(std::move(store_path)), backend_(backend) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    int line_no = 0;
    std::string model_id;
    int dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (line_no == 1) {
            if (!parse_store_header(line, model_id, dim)) {
                throw ParseError(path_.string(), 1, "missing embedding store header");
            }
            if (model_id != backend_.model_id() || dim != backend_.dim()) {
                throw ValidationError("embedding store " + path_.string() + " was built with " +
                                      model_id + "/" + std::to_string(dim) + ", backend is " +
                                      backend_.model_id() + "/" + std::to_string(backend_.dim()));
            }
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(path_.string(), line_no, "malformed store row");
        }
        std::string key = line.substr(0, comma);
        auto values = parse_row_floats(line, comma + 1, dim, path_.string(), line_no);
        if (store_.emplace(key, std::move(values)).second) {
            order_.push_back(key);
        }
    }
}

EmbeddingVector CachedEmbedder::embed(const std::string& text) {
    std::string key = to_hex(fnv1a64(text));
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (auto it = store_.find(key); it != store_.end()) {
            return EmbeddingVector{it->second, backend_.model_id()};
        }
    }
    EmbeddingVector fresh = backend_.embed(text);
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = store_.emplace(key, fresh.values);
    (void)it;
    if (inserted) {
        order_.push_back(key);
        if (!path_.empty()) {
            bool fresh_file = !std::filesystem::exists(path_) ||
                              std::filesystem::file_size(path_) == 0;
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            std::ofstream out(path_, std::ios::binary | std::ios::app);
            if (fresh_file) {
                out << store_header(backend_.model_id(), backend_.dim()) << '\n';
            }
            out << format_row(key, fresh.values) << '\n';
            out.flush();
        }
    }
    return fresh;
}

int CachedEmbedder::dim() const { return backend_.dim(); }

std::string CachedEmbedder::model_id() const { return backend_.model_id(); }

std::size_t CachedEmbedder::store_size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return store_.size();
}

void CachedEmbedder::save() const {
    if (path_.empty()) return;
    std::lock_guard<std::mutex> lock(mu_);
    std::ostringstream lines;
    lines << store_header(backend_.model_id(), backend_.dim()) << '\n';
    for (const auto& key : order_) {
        lines << format_row(key, store_.at(key)) << '\n';
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    write_text_file_atomic(path_, lines.str());
}

FileStoreEmbedder::FileStoreEmbedder(const std::filesystem::path& store_path) {
    std::ifstream in(store_path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open embedding store: " + store_path.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (line_no == 1) {
            if (!parse_store_header(line, model_id_, dim_)) {
                throw ParseError(store_path.string(), 1, "missing embedding store header");
            }
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(store_path.string(), line_no, "malformed store row");
        }
        store_[line.substr(0, comma)] =
            parse_row_floats(line, comma + 1, dim_, store_path.string(), line_no);
    }
}

EmbeddingVector FileStoreEmbedder::embed(const std::string& text) {
    if (text.empty()) {
        return EmbeddingVector{std::vector<float>(static_cast<std::size_t>(dim_), 0.0f), model_id_};
    }
    auto it = store_.find(to_hex(fnv1a64(text)));
    if (it == store_.end()) {
        throw ValidationError("embedding store has no entry for the requested text");
    }
    return EmbeddingVector{it->second, model_id_};
}

EmbeddingVector concat(const std::vector<EmbeddingVector>& vectors) {
    if (vectors.empty()) {
        throw ValidationError("concat requires at least one vector");
    }
    EmbeddingVector out;
    std::size_t total = 0;
    for (const auto& v : vectors) total += v.values.size();
    out.values.reserve(total);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        out.values.insert(out.values.end(), vectors[i].values.begin(), vectors[i].values.end());
        if (i > 0) out.model_id += '+';
        out.model_id += vectors[i].model_id;
    }
    return out;
}

ImageEmbeddings load_image_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open image embedding file: " + path.string());
    }
    ImageEmbeddings out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (line_no == 1) {
            if (!parse_store_header(line, out.model_id, out.dim)) {
                throw ParseError(path.string(), 1, "missing embedding header");
            }
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(path.string(), line_no, "malformed embedding row");
        }
        std::string item_id = line.substr(0, comma);
        auto values = parse_row_floats(line, comma + 1, out.dim, path.string(), line_no);
        out.by_item[item_id] = EmbeddingVector{std::move(values), out.model_id};
    }
    return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw ValidationError("cosine requires equal dims, got " + std::to_string(a.dim()) +
                              " and " + std::to_string(b.dim()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        double x = a.values[static_cast<std::size_t>(i)];
        double y = b.values[static_cast<std::size_t>(i)];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("cosine undefined for zero vectors");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

const std::vector<std::string>& known_combo_tags() {
    static const std::vector<std::string> tags = {
        "text",          "text+image",    "kar",
        "llm_rec",       "rec_gpt4v",     "cot",
        "visual_only",   "visual_textual", "xr_separate",
        "xr_combined",   "xr_keyword_separate", "xr_keyword_combined",
        "x_reflect",     "x_reflect_keyword",
    };
    return tags;
}

std::vector<std::string> combo_required_strategies(const std::string& combo_tag) {
    if (combo_tag == "text" || combo_tag == "text+image") return {};
    if (combo_tag == "xr_separate") return {"xr_separate_fuse"};
    if (combo_tag == "x_reflect") return {"xr_separate_fuse", "xr_combined"};
    if (combo_tag == "x_reflect_keyword") return {"xr_keyword_separate", "xr_keyword_combined"};
    for (const auto& tag : known_combo_tags()) {
        if (tag == combo_tag) return {combo_tag};
    }
    throw ValidationError("unknown combo tag: " + combo_tag);
}

namespace {

EmbeddingVector embed_record(const std::string& combo_tag,
                             const corpus::Item& item,
                             const std::map<std::string, gateway::EnrichmentRecord>& records,
                             const std::string& strategy_tag,
                             EmbeddingBackend& backend) {
    auto it = records.find(strategy_tag);
    if (it == records.end()) {
        throw MissingRecord("item " + item.item_id + ": combo " + combo_tag +
                            " needs an enrichment record for strategy " + strategy_tag);
    }
    return backend.embed(it->second.response_text);
}

}  // namespace

ItemRepresentation build_representation(const std::string& combo_tag,
                                        const corpus::Item& item,
                                        const std::map<std::string, gateway::EnrichmentRecord>& records,
                                        const ImageEmbeddings* image_embs,
                                        EmbeddingBackend& backend) {
    ItemRepresentation out;
    out.item_id = item.item_id;
    out.combo_tag = combo_tag;

    if (combo_tag == "text") {
        out.vector = backend.embed(item.description);
        return out;
    }
    if (combo_tag == "text+image") {
        if (image_embs == nullptr) {
            throw MissingImageEmbedding("combo text+image requires an image embedding file");
        }
        auto it = image_embs->by_item.find(item.item_id);
        if (it == image_embs->by_item.end()) {
            throw MissingImageEmbedding("item " + item.item_id + " has no image embedding");
        }
        out.vector = concat({backend.embed(item.description), it->second});
        return out;
    }
    if (combo_tag == "x_reflect") {
        out.vector = concat({embed_record(combo_tag, item, records, "xr_separate_fuse", backend),
                             embed_record(combo_tag, item, records, "xr_combined", backend)});
        return out;
    }
    if (combo_tag == "x_reflect_keyword") {
        out.vector = concat({embed_record(combo_tag, item, records, "xr_keyword_separate", backend),
                             embed_record(combo_tag, item, records, "xr_keyword_combined", backend)});
        return out;
    }

    auto needed = combo_required_strategies(combo_tag);  // validates the tag
    std::string strategy = combo_tag == "xr_separate" ? "xr_separate_fuse" : needed.front();
    out.vector = embed_record(combo_tag, item, records, strategy, backend);
    return out;
}

const float* RepresentationSet::row_of(const std::string& item_id) const {
    auto it = index.find(item_id);
    if (it == index.end()) {
        throw ValidationError("no representation for item " + item_id);
    }
    return row(it->second);
}

void RepresentationSet::rebuild_index() {
    index.clear();
    for (std::size_t i = 0; i < item_ids.size(); ++i) index.emplace(item_ids[i], i);
}

RepresentationSet build_representation_set(
    const std::string& combo_tag,
    const std::vector<corpus::Item>& items,
    const std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>>& records_by_item,
    const ImageEmbeddings* image_embs,
    EmbeddingBackend& backend) {
    std::vector<const corpus::Item*> ordered;
    ordered.reserve(items.size());
    for (const auto& item : items) ordered.push_back(&item);
    std::sort(ordered.begin(), ordered.end(),
              [](const corpus::Item* a, const corpus::Item* b) { return a->item_id < b->item_id; });

    RepresentationSet set;
    set.combo_tag = combo_tag;
    static const std::map<std::string, gateway::EnrichmentRecord> kNoRecords;
    for (const auto* item : ordered) {
        auto rec_it = records_by_item.find(item->item_id);
        const auto& records = rec_it == records_by_item.end() ? kNoRecords : rec_it->second;
        ItemRepresentation rep = build_representation(combo_tag, *item, records, image_embs, backend);
        if (set.dim == 0) {
            set.dim = rep.vector.dim();
        } else if (set.dim != rep.vector.dim()) {
            throw ValidationError("representation dim mismatch for item " + item->item_id);
        }
        set.item_ids.push_back(item->item_id);
        set.data.insert(set.data.end(), rep.vector.values.begin(), rep.vector.values.end());
    }
    set.rebuild_index();
    return set;
}

void save_representations(const std::filesystem::path& base_path, const RepresentationSet& set) {
    std::filesystem::path bin = base_path;
    bin += ".bin";
    std::filesystem::path manifest = base_path;
    manifest += ".json";

    if (base_path.has_parent_path()) std::filesystem::create_directories(base_path.parent_path());
    std::string bytes(reinterpret_cast<const char*>(set.data.data()),
                      set.data.size() * sizeof(float));
    write_text_file_atomic(bin, bytes);

    json j{{"combo_tag", set.combo_tag},
           {"dim", set.dim},
           {"count", set.item_ids.size()},
           {"items", set.item_ids}};
    write_text_file_atomic(manifest, j.dump(2) + "\n");
}

RepresentationSet load_representations(const std::filesystem::path& base_path) {
    std::filesystem::path bin = base_path;
    bin += ".bin";
    std::filesystem::path manifest = base_path;
    manifest += ".json";

    json j = json::parse(read_text_file(manifest));
    RepresentationSet set;
    set.combo_tag = j.at("combo_tag").get<std::string>();
    set.dim = j.at("dim").get<int>();
    set.item_ids = j.at("items").get<std::vector<std::string>>();

    std::string bytes = read_text_file(bin);
    std::size_t expected = set.item_ids.size() * static_cast<std::size_t>(set.dim) * sizeof(float);
    if (bytes.size() != expected) {
        throw ValidationError("representation payload size mismatch: " + bin.string());
    }
    set.data.resize(set.item_ids.size() * static_cast<std::size_t>(set.dim));
    std::memcpy(set.data.data(), bytes.data(), bytes.size());
    set.rebuild_index();
    return set;
}

}  // namespace xrec::embedding
