#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/uuid/name_generator_sha1.hpp>
#include <boost/uuid/string_generator.hpp>
#include <boost/uuid/uuid.hpp>
#include <boost/uuid/uuid_hash.hpp>
#include <boost/uuid/uuid_io.hpp>

#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"

namespace chatsos {

/// 128-bit chunk identifier. Byte-wise ordering equals ordering of the
/// canonical lowercase string form.
using ChunkId = boost::uuids::uuid;

using boost::uuids::to_string;

inline ChunkId parse_chunk_id(const std::string& s) {
  try {
    return boost::uuids::string_generator()(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kValidation, "not a UUID: " + s);
  }
}

/// Name-based (SHA-1, version 5) id for chunk `seq` of `doc_id`, so
/// re-ingesting a corpus reproduces the same ids.
inline ChunkId make_chunk_id(const std::string& doc_id, std::uint32_t seq) {
  static const ChunkId kNamespace =
      boost::uuids::string_generator()("6f1c1a52-3c1e-4b8e-9d55-2a0c7c2e5a10");
  boost::uuids::name_generator_sha1 gen(kNamespace);
  return gen(doc_id + '\x1f' + std::to_string(seq));
}

using Metadata = std::map<std::string, std::string>;

struct ChunkRecord {
  ChunkId chunk_id{};
  std::string doc_id;
  std::uint32_t seq = 0;
  std::uint64_t offset = 0;  // scalar values into the normalized document
  std::string text;
  Metadata metadata;

  bool operator==(const ChunkRecord&) const = default;
};

struct RetrievalHit {
  ChunkId chunk_id{};
  double similarity = 0.0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RetrievalHit&) const = default;
};

/// Descending similarity, then ascending chunk id.
inline bool hit_order(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.chunk_id < b.chunk_id;
}

/// The "vector + id" half: dense rows of floats keyed by chunk id.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(const ChunkId& id) const { return pos_.count(id) != 0; }
  const std::vector<ChunkId>& ids() const noexcept { return ids_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  std::span<const float> find(const ChunkId& id) const {
    const auto it = pos_.find(id);
    if (it == pos_.end()) return {};
    return row(it->second);
  }

  void add(const ChunkId& id, const EmbeddingVector& v) {
    if (v.dim() != dim_) {
      throw Error(ErrorKind::kConfiguration, "vector dim " + std::to_string(v.dim()) +
                                                 " does not match store dim " +
                                                 std::to_string(dim_));
    }
    if (!pos_.emplace(id, ids_.size()).second) {
      throw Error(ErrorKind::kUniqueness, "duplicate chunk id " + to_string(id));
    }
    ids_.push_back(id);
    data_.insert(data_.end(), v.values().begin(), v.values().end());
  }

 private:
  std::size_t dim_;
  std::vector<ChunkId> ids_;
  std::vector<float> data_;
  std::unordered_map<ChunkId, std::size_t, boost::hash<ChunkId>> pos_;
};

/// The "id + text" half.
class RecordStore {
 public:
  std::size_t size() const noexcept { return records_.size(); }
  bool contains(const ChunkId& id) const { return records_.count(id) != 0; }
  bool has_doc(const std::string& doc_id) const { return doc_chunks_.count(doc_id) != 0; }
  bool has_position(const std::string& doc_id, std::uint32_t seq) const {
    return positions_.count({doc_id, seq}) != 0;
  }
  const std::map<ChunkId, ChunkRecord>& records() const noexcept { return records_; }

  const ChunkRecord* find(const ChunkId& id) const {
    const auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
  }

  void add(ChunkRecord record) {
    if (records_.count(record.chunk_id)) {
      throw Error(ErrorKind::kUniqueness, "duplicate chunk id " + to_string(record.chunk_id));
    }
    if (!positions_.emplace(record.doc_id, record.seq).second) {
      throw Error(ErrorKind::kUniqueness, "duplicate (doc_id, seq) (" + record.doc_id + ", " +
                                              std::to_string(record.seq) + ")");
    }
    ++doc_chunks_[record.doc_id];
    const ChunkId id = record.chunk_id;
    records_.emplace(id, std::move(record));
  }

 private:
  std::map<ChunkId, ChunkRecord> records_;
  std::set<std::pair<std::string, std::uint32_t>> positions_;
  std::map<std::string, std::size_t> doc_chunks_;
};

struct IntegrityViolation {
  ChunkId chunk_id{};
  std::string rule;

  bool operator==(const IntegrityViolation&) const = default;
};

/// Dual store: an exact-search vector index and a record table joined by
/// chunk id. Any number of concurrent readers; writers are exclusive.
class KnowledgeStore {
 public:
  explicit KnowledgeStore(std::size_t dim) : vectors_(dim) {
    if (dim == 0) throw Error(ErrorKind::kConfiguration, "store dim must be positive");
  }

  /// Assembles a store from halves without checking that they agree; see
  /// check_integrity().
  static KnowledgeStore from_parts(VectorIndex vectors, RecordStore records) {
    KnowledgeStore store(vectors.dim());
    store.vectors_ = std::move(vectors);
    store.records_ = std::move(records);
    return store;
  }

  KnowledgeStore(KnowledgeStore&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    vectors_ = std::move(other.vectors_);
    records_ = std::move(other.records_);
  }

  KnowledgeStore& operator=(KnowledgeStore&& other) noexcept {
    if (this != &other) {
      std::scoped_lock lock(mutex_, other.mutex_);
      vectors_ = std::move(other.vectors_);
      records_ = std::move(other.records_);
    }
    return *this;
  }

  KnowledgeStore(const KnowledgeStore&) = delete;
  KnowledgeStore& operator=(const KnowledgeStore&) = delete;

  std::size_t dim() const { return vectors_.dim(); }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }

  bool has_doc(const std::string& doc_id) const {
    std::shared_lock lock(mutex_);
    return records_.has_doc(doc_id);
  }

  ChunkId insert(ChunkRecord record, const EmbeddingVector& vector) {
    std::vector<std::pair<ChunkRecord, EmbeddingVector>> one;
    one.emplace_back(std::move(record), vector);
    return insert_batch(std::move(one)).front();
  }

  /// Inserts all entries or none: every entry is validated against the store
  /// and against the rest of the batch before anything is written.
  std::vector<ChunkId> insert_batch(std::vector<std::pair<ChunkRecord, EmbeddingVector>> entries) {
    std::unique_lock lock(mutex_);
    std::set<ChunkId> batch_ids;
    std::set<std::pair<std::string, std::uint32_t>> batch_positions;
    for (const auto& [record, vector] : entries) {
      if (vector.dim() != vectors_.dim()) {
        throw Error(ErrorKind::kConfiguration, "vector dim " + std::to_string(vector.dim()) +
                                                   " does not match store dim " +
                                                   std::to_string(vectors_.dim()));
      }
      if (vectors_.contains(record.chunk_id) || records_.contains(record.chunk_id) ||
          !batch_ids.insert(record.chunk_id).second) {
        throw Error(ErrorKind::kUniqueness, "duplicate chunk id " + to_string(record.chunk_id));
      }
      if (records_.has_position(record.doc_id, record.seq) ||
          !batch_positions.emplace(record.doc_id, record.seq).second) {
        throw Error(ErrorKind::kUniqueness, "duplicate (doc_id, seq) (" + record.doc_id + ", " +
                                                std::to_string(record.seq) + ")");
      }
    }
    std::vector<ChunkId> ids;
    ids.reserve(entries.size());
    for (auto& [record, vector] : entries) {
      ids.push_back(record.chunk_id);
      vectors_.add(record.chunk_id, vector);
      records_.add(std::move(record));
    }
    return ids;
  }

  /// Exhaustive cosine scan. At most k hits with similarity >= threshold.
  std::vector<RetrievalHit> search_top_k(const EmbeddingVector& query, std::size_t k,
                                         double threshold) const {
    if (k == 0) throw Error(ErrorKind::kValidation, "k must be at least 1");
    std::shared_lock lock(mutex_);
    if (query.dim() != vectors_.dim()) {
      throw Error(ErrorKind::kConfiguration, "query dim " + std::to_string(query.dim()) +
                                                 " does not match store dim " +
                                                 std::to_string(vectors_.dim()));
    }
    std::vector<RetrievalHit> hits;
    const auto& ids = vectors_.ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double sim = std::clamp(dot(query.values(), vectors_.row(i)), -1.0, 1.0);
      if (sim >= threshold) hits.push_back({ids[i], sim, 0});
    }
    const std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                      hit_order);
    hits.resize(keep);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
  }

  ChunkRecord get_chunk(const ChunkId& id) const {
    std::shared_lock lock(mutex_);
    const ChunkRecord* r = records_.find(id);
    if (!r) throw Error(ErrorKind::kNotFound, "unknown chunk id " + to_string(id));
    return *r;
  }

  /// Stored vector for `id`; not-found when absent.
  EmbeddingVector get_vector(const ChunkId& id) const {
    std::shared_lock lock(mutex_);
    const auto v = vectors_.find(id);
    if (v.empty()) throw Error(ErrorKind::kNotFound, "no vector for chunk id " + to_string(id));
    return EmbeddingVector::from_unit(std::vector<float>(v.begin(), v.end()));
  }

  /// Snapshot of all records in chunk id order.
  std::vector<ChunkRecord> records() const {
    std::shared_lock lock(mutex_);
    std::vector<ChunkRecord> out;
    out.reserve(records_.size());
    for (const auto& [id, r] : records_.records()) out.push_back(r);
    return out;
  }

  /// Empty iff vectors and records are in bijection and every stored vector
  /// is finite and unit length.
  std::vector<IntegrityViolation> check_integrity() const {
    std::shared_lock lock(mutex_);
    std::vector<IntegrityViolation> out;
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
      const ChunkId& id = vectors_.ids()[i];
      if (!records_.contains(id)) out.push_back({id, "orphan vector"});
      const double norm = EmbeddingVector::l2_norm(vectors_.row(i));
      if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
        out.push_back({id, "vector not unit norm"});
      }
    }
    for (const auto& [id, record] : records_.records()) {
      if (!vectors_.contains(id)) out.push_back({id, "orphan text"});
      if (record.doc_id.empty()) out.push_back({id, "empty doc_id"});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return std::tie(a.chunk_id, a.rule) < std::tie(b.chunk_id, b.rule);
    });
    return out;
  }

  /// Runs `fn(const VectorIndex&, const RecordStore&)` under a shared lock.
  template <typename Fn>
  decltype(auto) read(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(vectors_, records_);
  }

 private:
  VectorIndex vectors_;
  RecordStore records_;
  mutable std::shared_mutex mutex_;
};

}  // namespace chatsos
