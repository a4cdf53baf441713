#pragma once

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
#include "xrec/gateway.hpp"

namespace xrec::embedding {

struct EmbeddingVector {
    std::vector<float> values;
    std::string model_id;

    int dim() const { return static_cast<int>(values.size()); }
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual int dim() const = 0;
    virtual std::string model_id() const = 0;
};

// Deterministic test embedder: a hash-seeded pseudo-random vector, normalized
// to unit length. Same text always yields the same vector; empty text yields
// the zero vector and is counted.
class HashEmbedder : public EmbeddingBackend {
public:
    explicit HashEmbedder(int dim = 384, std::string model_id = "hash-embedder-v1");

    EmbeddingVector embed(const std::string& text) override;
    int dim() const override { return dim_; }
    std::string model_id() const override { return model_id_; }

    int zero_vector_count() const { return zero_vector_count_; }

private:
    int dim_;
    std::string model_id_;
    int zero_vector_count_ = 0;
};

struct EmbedBackendConfig {
    std::string endpoint_url;
    std::string model_id = "all-MiniLM-L6-v2";
    std::string api_key_env;
    int dim = 384;
    int timeout_s = 30;
    int max_retries = 3;
    int backoff_base_ms = 1000;
};

// POST {endpoint}/embeddings with {model, input:[text]}.
class RemoteEmbedder : public EmbeddingBackend {
public:
    explicit RemoteEmbedder(EmbedBackendConfig cfg) : cfg_(std::move(cfg)) {}

    EmbeddingVector embed(const std::string& text) override;
    int dim() const override { return cfg_.dim; }
    std::string model_id() const override { return cfg_.model_id; }

private:
    EmbedBackendConfig cfg_;
};

// Persistent store of embeddings keyed by text hash. File format: a header
// line `#model_id=<s> dim=<n>` followed by CSV rows `<hash>,<f>,...`.
// Wrapping a backend makes each unique text cost at most one remote call.
class CachedEmbedder : public EmbeddingBackend {
public:
    CachedEmbedder(std::filesystem::path store_path, EmbeddingBackend& backend);

    EmbeddingVector embed(const std::string& text) override;
    int dim() const override;
    std::string model_id() const override;

    std::size_t store_size() const;
    void save() const;

private:
    std::filesystem::path path_;
    EmbeddingBackend& backend_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<float>> store_;
    std::vector<std::string> order_;
};

// Lookup-only backend over a prebuilt store file; unknown text is an error.
class FileStoreEmbedder : public EmbeddingBackend {
public:
    explicit FileStoreEmbedder(const std::filesystem::path& store_path);

    EmbeddingVector embed(const std::string& text) override;
    int dim() const override { return dim_; }
    std::string model_id() const override { return model_id_; }

private:
    std::string model_id_;
    int dim_ = 0;
    std::unordered_map<std::string, std::vector<float>> store_;
};

// Concatenation in input order; slicing the output at input boundaries
// recovers the inputs exactly.
EmbeddingVector concat(const std::vector<EmbeddingVector>& vectors);

struct ImageEmbeddings {
    std::string model_id;
    int dim = 0;
    std::unordered_map<std::string, EmbeddingVector> by_item;
};

// Same header format as the embedding store, with item ids as row keys.
ImageEmbeddings load_image_embeddings(const std::filesystem::path& path);

// dot(a,b) / (|a| |b|); throws on dimension mismatch or zero vectors.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class MissingRecord : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MissingImageEmbedding : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct ItemRepresentation {
    std::string item_id;
    std::string combo_tag;
    EmbeddingVector vector;
};

// Combo tags: "text", "text+image", one tag per prompting strategy response,
// and the concatenated composites "x_reflect" / "x_reflect_keyword".
const std::vector<std::string>& known_combo_tags();

// Strategy tags whose enrichment records the combo consumes (empty for the
// content-only combos).
std::vector<std::string> combo_required_strategies(const std::string& combo_tag);

ItemRepresentation build_representation(const std::string& combo_tag,
                                        const corpus::Item& item,
                                        const std::map<std::string, gateway::EnrichmentRecord>& records,
                                        const ImageEmbeddings* image_embs,
                                        EmbeddingBackend& backend);

// Row-major matrix of per-item representations with a fixed item order.
struct RepresentationSet {
    std::string combo_tag;
    int dim = 0;
    std::vector<std::string> item_ids;
    std::vector<float> data;
    std::unordered_map<std::string, std::size_t> index;

    const float* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
    const float* row_of(const std::string& item_id) const;
    bool contains(const std::string& item_id) const { return index.count(item_id) > 0; }

    void rebuild_index();
};

RepresentationSet build_representation_set(const std::string& combo_tag,
                                           const std::vector<corpus::Item>& items,
                                           const std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>>& records_by_item,
                                           const ImageEmbeddings* image_embs,
                                           EmbeddingBackend& backend);

// Binary little-endian float32 payload plus a JSON sidecar manifest carrying
// the item order, combo tag and dimension.
void save_representations(const std::filesystem::path& base_path, const RepresentationSet& set);
RepresentationSet load_representations(const std::filesystem::path& base_path);

}  // namespace xrec::embedding
