#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fuess/domain.hpp"

namespace fuess {

using EmbeddingVector = std::vector<double>;

struct Document {
  std::string source;
  std::string text;
};

/// Slice of a source document; `begin`/`end` are code-point offsets.
struct DocumentChunk {
  std::string source;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string text;

  bool operator==(const DocumentChunk&) const = default;
};

inline constexpr std::size_t kDefaultChunkSize = 1000;
inline constexpr std::size_t kDefaultChunkOverlap = 200;
inline constexpr std::size_t kDefaultEmbeddingDim = 256;
inline constexpr std::size_t kDefaultKnowledgeTopK = 4;

/// Sliding window over code points: windows advance by chunk_size - overlap,
/// the last one ends at the text end. Empty documents produce no chunks.
std::vector<DocumentChunk> chunk_documents(std::span<const Document> documents,
                                           std::size_t chunk_size = kDefaultChunkSize,
                                           std::size_t overlap = kDefaultChunkOverlap);

/// Reads every .txt/.md file of `dir` (sorted by file name).
std::vector<Document> load_knowledge_dir(const std::filesystem::path& dir);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

/// Offline embedder: lowercase ASCII alphanumeric tokens (bytes >= 0x80 are
/// kept inside tokens), FNV-1a 64 signed feature hashing into `dimension`
/// buckets, L2-normalised. Empty input maps to the zero vector.
class LocalHashEmbedder final : public EmbeddingProvider {
 public:
  explicit LocalHashEmbedder(std::size_t dimension = kDefaultEmbeddingDim);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override;

  /// Signed hashed token counts before normalisation.
  EmbeddingVector hashed_counts(std::string_view text) const;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dimension_;
};

struct RemoteEmbedderConfig {
  std::string base_url;  // empty: FUESS_API_BASE_URL
  std::string path = "/embeddings";
  std::string model = "text-embedding-3-small";
  std::string api_key_env = "FUESS_API_KEY";
  std::size_t dimension = 0;  // 0: accept the first response's length
  int timeout_seconds = 60;
};

/// POSTs {model, input} and reads data[0].embedding.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  EmbeddingVector embed(std::string_view text) const override;
  /// 0 until the first response when the configured dimension is 0.
  std::size_t dimension() const override { return dimension_.load(); }
  std::string name() const override { return "remote:" + config_.model; }

 private:
  RemoteEmbedderConfig config_;
  mutable std::atomic<std::size_t> dimension_;
};

/// Per-variable z-score statistics of an IPDVS, frozen at build time.
struct EncoderStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
  /// Empty: vectors are the z-scores below. Otherwise the name of the
  /// embedding provider that embedded each sample's text line, and the store
  /// dimension is that provider's.
  std::string text_encoder;

  std::size_t size() const { return names.size(); }
  bool operator==(const EncoderStats&) const = default;
};

/// Mean and population std over the non-missing values of each variable.
EncoderStats compute_encoder_stats(std::span<const Sample> samples,
                                   std::span<const std::string> names);

/// Component j = (x_j - mean_j) / std_j; zero when std_j == 0 or x_j is
/// missing. Variables of the sample outside `stats` raise UnknownVariable;
/// a stats variable absent from the sample encodes as 0.
EmbeddingVector encode_sample(const Sample& sample, const EncoderStats& stats);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

enum class StoreKind : std::uint8_t { Ikvs = 0, Ipdvs = 1 };

using Payload = std::variant<DocumentChunk, Sample>;

struct StoreItem {
  EmbeddingVector vector;
  Payload payload;
  std::uint64_t id = 0;

  bool operator==(const StoreItem&) const = default;
};

struct RetrievalHit {
  const StoreItem* item = nullptr;
  double distance = 0.0;
};

/// Flat exact Euclidean index. Building is single-writer; once built,
/// concurrent const queries are safe.
class VectorStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  VectorStore(StoreKind kind, std::size_t dimension,
              std::optional<EncoderStats> stats = std::nullopt);

  std::uint64_t add(EmbeddingVector vector, Payload payload);

  /// min(k, size()) hits by ascending distance, ties by ascending id.
  std::vector<RetrievalHit> query_top_k(std::span<const double> query, std::size_t k) const;

  StoreKind kind() const { return kind_; }
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<StoreItem>& items() const { return items_; }
  const std::optional<EncoderStats>& encoder_stats() const { return stats_; }

  bool operator==(const VectorStore&) const = default;

 private:
  StoreKind kind_;
  std::size_t dimension_;
  std::optional<EncoderStats> stats_;
  std::vector<StoreItem> items_;
};

/// Knowledge store: one embedded item per chunk.
VectorStore build_ikvs(std::span<const DocumentChunk> chunks, const EmbeddingProvider& provider);

/// Process-data store over `samples` restricted to `names`; stats are
/// computed from the same samples.
VectorStore build_ipdvs(std::span<const Sample> samples, std::span<const std::string> names);

/// Same store contents, but each vector is `provider` applied to the
/// sample's text line (format_sample_text without label).
VectorStore build_ipdvs_text(std::span<const Sample> samples, std::span<const std::string> names,
                             const EmbeddingProvider& provider);

/// Query vector for `sample` in `ipdvs`'s encoding. Text-encoded stores need
/// `text_embedder`, whose name must match the one recorded in the store.
EmbeddingVector encode_query(const VectorStore& ipdvs, const Sample& sample,
                             const EmbeddingProvider* text_embedder = nullptr);

std::vector<std::uint8_t> serialize_store(const VectorStore& store);
VectorStore deserialize_store(std::span<const std::uint8_t> bytes);
void save_store(const VectorStore& store, const std::filesystem::path& path);
VectorStore load_store(const std::filesystem::path& path);

}  // namespace fuess
