#include "fuess/vector_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "fuess/error.hpp"
#include "fuess/prompt.hpp"

namespace fuess {

namespace {

// Byte offsets of code point starts, plus text.size() as sentinel.
std::vector<std::size_t> code_point_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json payload_to_json(const Payload& payload) {
  if (const auto* chunk = std::get_if<DocumentChunk>(&payload)) {
    return {{"type", "chunk"},
            {"source", chunk->source},
            {"begin", chunk->begin},
            {"end", chunk->end},
            {"text", chunk->text}};
  }
  auto j = sample_to_json(std::get<Sample>(payload));
  j["type"] = "sample";
  return j;
}

Payload payload_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "chunk") {
    return DocumentChunk{j.at("source").get<std::string>(), j.at("begin").get<std::size_t>(),
                         j.at("end").get<std::size_t>(), j.at("text").get<std::string>()};
  }
  if (type != "sample") throw std::runtime_error("unknown payload type " + type);
  return sample_from_json(j);
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
      std::reverse(bytes.begin(), bytes.end());
      out_.insert(out_.end(), bytes.begin(), bytes.end());
    } else {
      const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
      out_.insert(out_.end(), p, p + sizeof(T));
    }
  }
  void put_bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(raw);
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void corrupt(const std::string& what) const {
    throw Error(Errc::CorruptStore, what + " at offset " + std::to_string(pos_), what,
                static_cast<std::int64_t>(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) corrupt("truncated store");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "FUVS";

}  // namespace

std::vector<DocumentChunk> chunk_documents(std::span<const Document> documents,
                                           std::size_t chunk_size, std::size_t overlap) {
  if (chunk_size == 0 || overlap >= chunk_size) {
    throw Error(Errc::InvalidChunkParams, "require chunk_size > overlap >= 0");
  }
  std::vector<DocumentChunk> chunks;
  for (const auto& doc : documents) {
    const auto offsets = code_point_offsets(doc.text);
    const std::size_t length = offsets.size() - 1;
    std::size_t start = 0;
    while (start < length) {
      const std::size_t end = std::min(start + chunk_size, length);
      chunks.push_back({doc.source, start, end,
                        doc.text.substr(offsets[start], offsets[end] - offsets[start])});
      if (end == length) break;
      start = end - overlap;
    }
  }
  return chunks;
}

std::vector<Document> load_knowledge_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(Errc::FileNotFound, "knowledge directory " + dir.string() + " not found",
                dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + f.string(), f.string());
    docs.push_back({f.filename().string(),
                    std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())});
  }
  return docs;
}

LocalHashEmbedder::LocalHashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be > 0");
}

std::string LocalHashEmbedder::name() const {
  return "local-hash-" + std::to_string(dimension_);
}

std::vector<std::string> LocalHashEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                      (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (word) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EmbeddingVector LocalHashEmbedder::hashed_counts(std::string_view text) const {
  EmbeddingVector v(dimension_, 0.0);
  for (const auto& token : tokenize(text)) {
    const auto h = fnv1a64(token);
    const auto bucket = static_cast<std::size_t>(h % dimension_);
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  return v;
}

EmbeddingVector LocalHashEmbedder::embed(std::string_view text) const {
  auto v = hashed_counts(text);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

EncoderStats compute_encoder_stats(std::span<const Sample> samples,
                                   std::span<const std::string> names) {
  EncoderStats stats;
  stats.names.assign(names.begin(), names.end());
  stats.mean.assign(names.size(), 0.0);
  stats.stddev.assign(names.size(), 0.0);
  for (std::size_t j = 0; j < names.size(); ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      const auto* v = s.find(names[j]);
      if (v && *v) {
        sum += **v;
        ++n;
      }
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& s : samples) {
      const auto* v = s.find(names[j]);
      if (v && *v) ss += (**v - mean) * (**v - mean);
    }
    stats.mean[j] = mean;
    stats.stddev[j] = std::sqrt(ss / static_cast<double>(n));
  }
  return stats;
}

EmbeddingVector encode_sample(const Sample& sample, const EncoderStats& stats) {
  for (const auto& e : sample.values) {
    if (std::find(stats.names.begin(), stats.names.end(), e.name) == stats.names.end()) {
      throw Error(Errc::UnknownVariable, "variable '" + e.name + "' has no encoder statistics",
                  e.name);
    }
  }
  EmbeddingVector v(stats.size(), 0.0);
  for (std::size_t j = 0; j < stats.size(); ++j) {
    const auto* value = sample.find(stats.names[j]);
    if (value && *value && stats.stddev[j] > 0.0) {
      v[j] = (**value - stats.mean[j]) / stats.stddev[j];
    }
  }
  return v;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::DimensionMismatch, "vectors of dimension " + std::to_string(a.size()) +
                                             " and " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

VectorStore::VectorStore(StoreKind kind, std::size_t dimension, std::optional<EncoderStats> stats)
    : kind_(kind), dimension_(dimension), stats_(std::move(stats)) {
  if (dimension_ == 0) throw Error(Errc::InvalidArgument, "store dimension must be > 0");
  if (kind_ == StoreKind::Ipdvs) {
    if (!stats_) throw Error(Errc::InvalidArgument, "an IPDVS requires encoder statistics");
    const auto vars = stats_->size();
    if (stats_->mean.size() != vars || stats_->stddev.size() != vars ||
        (stats_->text_encoder.empty() && vars != dimension_)) {
      throw Error(Errc::DimensionMismatch, "encoder statistics do not match store dimension");
    }
    for (double s : stats_->stddev) {
      if (!(s >= 0.0)) throw Error(Errc::InvalidArgument, "encoder std must be >= 0");
    }
  }
}

std::uint64_t VectorStore::add(EmbeddingVector vector, Payload payload) {
  if (vector.size() != dimension_) {
    throw Error(Errc::DimensionMismatch, "item of dimension " + std::to_string(vector.size()) +
                                             " in store of dimension " + std::to_string(dimension_));
  }
  for (double x : vector) {
    if (!std::isfinite(x)) throw Error(Errc::InvalidArgument, "embedding components must be finite");
  }
  const auto id = static_cast<std::uint64_t>(items_.size());
  items_.push_back({std::move(vector), std::move(payload), id});
  return id;
}

std::vector<RetrievalHit> VectorStore::query_top_k(std::span<const double> query,
                                                   std::size_t k) const {
  if (query.size() != dimension_) {
    throw Error(Errc::DimensionMismatch, "query of dimension " + std::to_string(query.size()) +
                                             " against store of dimension " +
                                             std::to_string(dimension_));
  }
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be >= 1");
  if (items_.empty()) throw Error(Errc::EmptyStore, "query against an empty store");

  std::vector<RetrievalHit> hits;
  hits.reserve(items_.size());
  for (const auto& item : items_) hits.push_back({&item, euclidean_distance(query, item.vector)});
  const auto take = std::min(k, hits.size());
  const auto by_distance_then_id = [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.item->id < b.item->id;
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    by_distance_then_id);
  hits.resize(take);
  return hits;
}

VectorStore build_ikvs(std::span<const DocumentChunk> chunks, const EmbeddingProvider& provider) {
  std::vector<EmbeddingVector> vectors;
  vectors.reserve(chunks.size());
  for (const auto& chunk : chunks) vectors.push_back(provider.embed(chunk.text));
  std::size_t dim = provider.dimension();
  if (dim == 0 && !vectors.empty()) dim = vectors.front().size();
  VectorStore store(StoreKind::Ikvs, dim);
  for (std::size_t i = 0; i < chunks.size(); ++i) store.add(std::move(vectors[i]), chunks[i]);
  return store;
}

namespace {

Sample restricted_to(const Sample& s, std::span<const std::string> names) {
  Sample out;
  out.label = s.label;
  for (const auto& name : names) {
    const auto* v = s.find(name);
    if (!v) throw Error(Errc::UnknownVariable, "sample lacks variable '" + name + "'", name);
    out.values.push_back({name, *v});
  }
  return out;
}

}  // namespace

VectorStore build_ipdvs(std::span<const Sample> samples, std::span<const std::string> names) {
  auto stats = compute_encoder_stats(samples, names);
  VectorStore store(StoreKind::Ipdvs, names.size(), stats);
  for (const auto& s : samples) {
    auto restricted = restricted_to(s, names);
    auto vec = encode_sample(restricted, stats);
    store.add(std::move(vec), std::move(restricted));
  }
  return store;
}

VectorStore build_ipdvs_text(std::span<const Sample> samples, std::span<const std::string> names,
                             const EmbeddingProvider& provider) {
  auto stats = compute_encoder_stats(samples, names);
  stats.text_encoder = provider.name();
  std::vector<Sample> restricted;
  std::vector<EmbeddingVector> vectors;
  for (const auto& s : samples) {
    restricted.push_back(restricted_to(s, names));
    vectors.push_back(provider.embed(format_sample_text(restricted.back(), false)));
  }
  std::size_t dim = provider.dimension();
  if (dim == 0 && !vectors.empty()) dim = vectors.front().size();
  if (dim == 0) throw Error(Errc::ProviderUnavailable, "embedding dimension unknown before the first response");
  VectorStore store(StoreKind::Ipdvs, dim, std::move(stats));
  for (std::size_t i = 0; i < restricted.size(); ++i) store.add(std::move(vectors[i]), std::move(restricted[i]));
  return store;
}

EmbeddingVector encode_query(const VectorStore& ipdvs, const Sample& sample,
                             const EmbeddingProvider* text_embedder) {
  if (ipdvs.kind() != StoreKind::Ipdvs || !ipdvs.encoder_stats()) {
    throw Error(Errc::InvalidArgument, "query encoding needs a process data store");
  }
  const auto& stats = *ipdvs.encoder_stats();
  const auto query = restricted_to(sample, stats.names);
  if (stats.text_encoder.empty()) return encode_sample(query, stats);
  if (!text_embedder) {
    throw Error(Errc::InvalidArgument, "store was encoded with '" + stats.text_encoder + "' and needs that embedder",
                stats.text_encoder);
  }
  if (text_embedder->name() != stats.text_encoder) {
    throw Error(Errc::InvalidArgument,
                "embedder '" + text_embedder->name() + "' differs from the store's '" + stats.text_encoder + "'",
                stats.text_encoder);
  }
  return text_embedder->embed(format_sample_text(query, false));
}

std::vector<std::uint8_t> serialize_store(const VectorStore& store) {
  Writer w;
  w.put_bytes(kMagic);
  w.put(VectorStore::kFormatVersion);
  w.put(static_cast<std::uint8_t>(store.kind()));
  w.put(static_cast<std::uint32_t>(store.dimension()));
  w.put(static_cast<std::uint64_t>(store.size()));
  const auto& stats = store.encoder_stats();
  w.put(static_cast<std::uint8_t>(!stats ? 0 : stats->text_encoder.empty() ? 1 : 2));
  if (stats) {
    if (!stats->text_encoder.empty()) w.put_string(stats->text_encoder);
    w.put(static_cast<std::uint32_t>(stats->size()));
    for (std::size_t j = 0; j < stats->size(); ++j) {
      w.put_string(stats->names[j]);
      w.put(stats->mean[j]);
      w.put(stats->stddev[j]);
    }
  }
  for (const auto& item : store.items()) {
    for (double x : item.vector) w.put(x);
    w.put_string(payload_to_json(item.payload).dump());
  }
  return w.take();
}

VectorStore deserialize_store(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_bytes(kMagic.size()) != kMagic) {
    throw Error(Errc::CorruptStore, "bad magic", "bad magic", 0);
  }
  const auto version = r.get<std::uint32_t>();
  if (version != VectorStore::kFormatVersion) {
    throw Error(Errc::UnsupportedVersion, "store format version " + std::to_string(version),
                {}, version);
  }
  const auto kind_byte = r.get<std::uint8_t>();
  if (kind_byte > 1) r.corrupt("unknown store kind");
  const auto kind = static_cast<StoreKind>(kind_byte);
  const auto dimension = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  std::optional<EncoderStats> stats;
  const auto has_stats = r.get<std::uint8_t>();
  if (has_stats > 2) r.corrupt("bad stats flag");
  if (has_stats) {
    EncoderStats s;
    if (has_stats == 2) {
      s.text_encoder = r.get_string();
      if (s.text_encoder.empty()) r.corrupt("empty encoder name");
    }
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t j = 0; j < n; ++j) {
      s.names.push_back(r.get_string());
      s.mean.push_back(r.get<double>());
      s.stddev.push_back(r.get<double>());
    }
    stats = std::move(s);
  }
  if (dimension == 0) r.corrupt("zero dimension");
  std::optional<VectorStore> store;
  try {
    store.emplace(kind, dimension, std::move(stats));
  } catch (const Error& e) {
    r.corrupt(std::string("inconsistent header: ") + e.what());
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingVector v(dimension);
    for (auto& x : v) x = r.get<double>();
    const auto offset = r.offset();
    const auto text = r.get_string();
    Payload payload;
    try {
      payload = payload_from_json(nlohmann::json::parse(text));
    } catch (const std::exception& e) {
      throw Error(Errc::CorruptStore, "bad payload at offset " + std::to_string(offset), e.what(),
                  static_cast<std::int64_t>(offset));
    }
    try {
      store->add(std::move(v), std::move(payload));
    } catch (const Error& e) {
      r.corrupt(std::string("bad item: ") + e.what());
    }
  }
  if (!r.at_end()) r.corrupt("trailing bytes");
  return std::move(*store);
}

void save_store(const VectorStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_store(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string(), path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string(), path.string());
}

VectorStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string(), path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_store(bytes);
}

}  // namespace fuess
