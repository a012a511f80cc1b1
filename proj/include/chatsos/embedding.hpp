#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatsos/error.hpp"
#include "chatsos/text.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos {

inline constexpr double kUnitNormTolerance = 1e-6;

/// Fixed-dimension float vector with unit L2 norm.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  /// Scales `values` to unit length. Throws on an empty or zero vector.
  template <typename T>
  static EmbeddingVector normalized(std::span<const T> values) {
    if (values.empty()) {
      throw Error(ErrorKind::kValidation, "embedding must have positive dimension");
    }
    double sq = 0.0;
    for (T v : values) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw Error(ErrorKind::kValidation, "embedding has non-finite component");
      }
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    if (!(sq > 0.0)) {
      throw Error(ErrorKind::kValidation, "cannot normalize a zero vector");
    }
    const double inv = 1.0 / std::sqrt(sq);
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = static_cast<float>(static_cast<double>(values[i]) * inv);
    }
    return EmbeddingVector(std::move(out));
  }

  template <typename T>
  static EmbeddingVector normalized(const std::vector<T>& values) {
    return normalized(std::span<const T>(values));
  }

  /// Wraps values that are already unit length (within 1e-6).
  static EmbeddingVector from_unit(std::vector<float> values) {
    if (values.empty()) {
      throw Error(ErrorKind::kValidation, "embedding must have positive dimension");
    }
    const double norm = l2_norm(values);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorKind::kValidation,
                  "embedding is not unit length (norm " + std::to_string(norm) + ")");
    }
    return EmbeddingVector(std::move(values));
  }

  /// e_k: 1 in component `k`, 0 elsewhere.
  static EmbeddingVector basis(std::size_t dim, std::size_t k = 0) {
    std::vector<float> out(dim, 0.0f);
    out.at(k) = 1.0f;
    return EmbeddingVector(std::move(out));
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  double norm() const { return l2_norm(values_); }

  bool operator==(const EmbeddingVector&) const = default;

  static double l2_norm(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sq);
  }

 private:
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

  std::vector<float> values_;
};

/// Dot product accumulated in double, front to back.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::kConfiguration,
                "dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
  }
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

enum class EmbedderKind { kLocal, kRemote };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::kLocal;
  std::size_t dim = 256;
  std::uint64_t seed = 0x5EED;
  // remote only
  std::string endpoint_url;
  std::string model_name;
  std::string auth_token;  // resolved from CHATSOS_EMBED_KEY when empty
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_batch = 64;
};

/// Anything that maps text to unit vectors of a fixed dimension.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const = 0;

  EmbeddingVector embed_one(const std::string& text) const {
    auto out = embed({text});
    return std::move(out.front());
  }
};

namespace detail {

inline constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Seeded 64-bit hash of a byte string (FNV-1a over the bytes, seeded basis,
/// splitmix64 finalizer).
inline std::uint64_t seeded_hash(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ detail::mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= detail::kFnvPrime;
  }
  return detail::mix64(h);
}

/// Padding marker placed once before and once after the text.
inline constexpr char32_t kTrigramBoundary = 0x0001;

/// Character trigrams of the normalized text, padded with one boundary
/// marker at each end. Empty for empty/whitespace-only text.
inline std::vector<std::u32string> char_trigrams(std::string_view text) {
  const std::string norm = normalize_text(text);
  std::vector<std::u32string> grams;
  if (norm.empty()) return grams;
  std::u32string padded;
  padded.push_back(kTrigramBoundary);
  padded += utf8::decode(norm);
  padded.push_back(kTrigramBoundary);
  grams.reserve(padded.size() - 2);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(padded.substr(i, 3));
  return grams;
}

/// Hashed bag of character trigrams: bucket h mod dim, sign from the top hash
/// bit, counts L2-normalized. Empty text (or a bag that cancels to zero)
/// maps to e_0.
inline EmbeddingVector embed_local(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 16) {
    throw Error(ErrorKind::kConfiguration, "local embedder requires dim >= 16");
  }
  std::vector<double> acc(dim, 0.0);
  for (const auto& gram : char_trigrams(text)) {
    const std::uint64_t h = seeded_hash(utf8::encode(gram), seed);
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    acc[bucket] += (h >> 63) == 0 ? 1.0 : -1.0;
  }
  const bool zero = std::all_of(acc.begin(), acc.end(), [](double v) { return v == 0.0; });
  if (zero) return EmbeddingVector::basis(dim, 0);
  return EmbeddingVector::normalized(acc);
}

class LocalEmbedder final : public Embedder {
 public:
  explicit LocalEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x5EED)
      : dim_(dim), seed_(seed) {
    if (dim_ < 16) {
      throw Error(ErrorKind::kConfiguration, "local embedder requires dim >= 16");
    }
  }

  std::size_t dim() const override { return dim_; }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_local(t, dim_, seed_));
    return out;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace chatsos
