#pragma once

// Naive reference scorer and random store builder for retrieval tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "chatsos/store.hpp"

namespace chatsos::testing {

struct StoredVector {
  ChunkId id{};
  std::vector<float> values;
};

/// Scores every entry, sorts the full list, then filters and cuts.
inline std::vector<RetrievalHit> naive_top_k(const std::vector<StoredVector>& entries,
                                             const std::vector<float>& query, std::size_t k,
                                             double threshold) {
  std::vector<RetrievalHit> all;
  for (const auto& e : entries) {
    double s = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      s += static_cast<double>(query[i]) * static_cast<double>(e.values[i]);
    }
    s = std::min(1.0, std::max(-1.0, s));
    all.push_back({e.id, s, 0});
  }
  std::sort(all.begin(), all.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.similarity > b.similarity) return true;
    if (a.similarity < b.similarity) return false;
    return a.chunk_id < b.chunk_id;
  });
  std::vector<RetrievalHit> out;
  for (const auto& h : all) {
    if (out.size() == k) break;
    if (h.similarity < threshold) continue;
    out.push_back(h);
    out.back().rank = out.size();
  }
  return out;
}

/// Random unit vectors on a coarse grid (values in {-2..2}), so exact
/// similarity ties are common; a share of entries duplicate earlier vectors.
inline std::vector<StoredVector> random_entries(std::mt19937_64& rng, std::size_t n,
                                                std::size_t dim) {
  std::vector<StoredVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    StoredVector e;
    e.id = make_chunk_id("doc-" + std::to_string(i / 7), static_cast<std::uint32_t>(i % 7));
    if (i > 0 && rng() % 5 == 0) {
      e.values = out[rng() % out.size()].values;
    } else {
      std::vector<double> raw(dim, 0.0);
      bool nonzero = false;
      for (auto& v : raw) {
        v = static_cast<double>(static_cast<int>(rng() % 5) - 2);
        nonzero = nonzero || v != 0.0;
      }
      if (!nonzero) raw[0] = 1.0;
      const auto unit = EmbeddingVector::normalized(raw);
      e.values.assign(unit.values().begin(), unit.values().end());
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline KnowledgeStore build_store(const std::vector<StoredVector>& entries, std::size_t dim) {
  KnowledgeStore store(dim);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ChunkRecord r;
    r.chunk_id = entries[i].id;
    r.doc_id = "doc-" + std::to_string(i / 7);
    r.seq = static_cast<std::uint32_t>(i % 7);
    r.text = "chunk " + std::to_string(i);
    store.insert(std::move(r), EmbeddingVector::from_unit(entries[i].values));
  }
  return store;
}

}  // namespace chatsos::testing
