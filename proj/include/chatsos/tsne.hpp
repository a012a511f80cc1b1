#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"

namespace chatsos::tsne {

using Rows = std::vector<std::vector<double>>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

using Layout = std::vector<Point2>;

/// Row-major N x N joint probabilities with per-point bandwidths.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<double> p;
  std::vector<double> sigma;
  std::vector<double> row_perplexity;  // achieved, before symmetrization
  double perplexity = 0.0;             // target after clamping
  std::vector<std::string> warnings;

  double at(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

struct RowCalibration {
  std::vector<double> probs;  // conditional p_{j|i} over the given neighbors
  double beta = 0.0;          // 1 / (2 sigma^2)
  double entropy = 0.0;       // natural log
  bool degenerate = false;
};

inline std::vector<double> squared_distances(const Rows& x) {
  const std::size_t n = x.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        const double diff = x[i][k] - x[j][k];
        s += diff * diff;
      }
      d[i * n + j] = s;
      d[j * n + i] = s;
    }
  }
  return d;
}

namespace detail {

// Gaussian kernel over shifted distances; returns entropy, fills probs.
inline double row_entropy(std::span<const double> dist, double dmin, double beta,
                          std::vector<double>& probs) {
  probs.resize(dist.size());
  double z = 0.0;
  double weighted = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    const double shifted = dist[j] - dmin;
    probs[j] = std::exp(-beta * shifted);
    z += probs[j];
    weighted += probs[j] * shifted;
  }
  for (auto& p : probs) p /= z;
  return std::log(z) + beta * weighted / z;
}

}  // namespace detail

/// Finds the Gaussian precision whose conditional distribution over
/// `sq_dist` (self excluded) has Shannon perplexity `perplexity`.
/// Expands a bracket by doubling/halving, then bisects for up to 64 steps.
/// Rows that cannot reach the target (all neighbors equidistant, or
/// duplicate points) fall back to uniform and are flagged degenerate.
inline RowCalibration calibrate_row(std::span<const double> sq_dist, double perplexity) {
  if (sq_dist.empty()) throw Error(ErrorKind::kPrecondition, "row has no neighbors");
  const double target = std::log(perplexity);
  const double dmin = *std::min_element(sq_dist.begin(), sq_dist.end());
  const double dmax = *std::max_element(sq_dist.begin(), sq_dist.end());
  RowCalibration out;
  auto uniform = [&]() {
    out.probs.assign(sq_dist.size(), 1.0 / static_cast<double>(sq_dist.size()));
    out.beta = 0.0;
    out.entropy = std::log(static_cast<double>(sq_dist.size()));
    out.degenerate = true;
    return out;
  };
  if (!(dmax > dmin)) return uniform();

  double mean_shift = 0.0;
  for (double d : sq_dist) mean_shift += d - dmin;
  mean_shift /= static_cast<double>(sq_dist.size());
  double beta = 1.0 / mean_shift;
  std::vector<double> probs;
  double h = detail::row_entropy(sq_dist, dmin, beta, probs);

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  constexpr int kMaxExpansions = 2000;
  int expansions = 0;
  if (h > target) {
    lo = beta;
    while (h > target && expansions++ < kMaxExpansions && std::isfinite(beta * 2.0)) {
      lo = beta;
      beta *= 2.0;
      h = detail::row_entropy(sq_dist, dmin, beta, probs);
    }
    hi = beta;
  } else {
    hi = beta;
    while (h < target && expansions++ < kMaxExpansions && beta > 1e-300) {
      hi = beta;
      beta /= 2.0;
      h = detail::row_entropy(sq_dist, dmin, beta, probs);
    }
    lo = beta;
  }
  for (int it = 0; it < 64 && std::abs(h - target) > 1e-13; ++it) {
    beta = 0.5 * (lo + hi);
    h = detail::row_entropy(sq_dist, dmin, beta, probs);
    if (h > target) {
      lo = beta;
    } else {
      hi = beta;
    }
  }
  if (!(std::abs(h - target) <= 1e-5)) return uniform();
  out.probs = std::move(probs);
  out.beta = beta;
  out.entropy = h;
  return out;
}

/// Conditional affinities per row, symmetrized to p_ij = (p_j|i + p_i|j) / 2N.
inline AffinityMatrix calibrate_affinities(const Rows& x, double perplexity) {
  const std::size_t n = x.size();
  if (n < 4) {
    throw Error(ErrorKind::kPrecondition,
                "t-SNE needs at least 4 points, got " + std::to_string(n));
  }
  if (!(perplexity > 0.0)) throw Error(ErrorKind::kValidation, "perplexity must be positive");
  AffinityMatrix a;
  a.n = n;
  const double max_perplexity = static_cast<double>(n - 1) / 3.0;
  a.perplexity = perplexity;
  if (perplexity > max_perplexity) {
    a.perplexity = max_perplexity;
    a.warnings.push_back("perplexity " + std::to_string(perplexity) + " clamped to " +
                         std::to_string(max_perplexity) + " for " + std::to_string(n) +
                         " points");
  }
  const std::vector<double> d = squared_distances(x);
  std::vector<double> cond(n * n, 0.0);
  a.sigma.resize(n);
  a.row_perplexity.resize(n);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0, k = 0; j < n; ++j) {
      if (j != i) row[k++] = d[i * n + j];
    }
    const RowCalibration c = calibrate_row(row, a.perplexity);
    if (c.degenerate) {
      a.warnings.push_back("row " + std::to_string(i) +
                           " is degenerate; using uniform affinities");
    }
    a.sigma[i] = c.beta > 0.0 ? std::sqrt(1.0 / (2.0 * c.beta))
                              : std::numeric_limits<double>::infinity();
    a.row_perplexity[i] = std::exp(c.entropy);
    for (std::size_t j = 0, k = 0; j < n; ++j) {
      if (j != i) cond[i * n + j] = c.probs[k++];
    }
  }
  a.p.assign(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) a.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
    }
  }
  return a;
}

inline Rows to_rows(const std::vector<EmbeddingVector>& vectors) {
  Rows out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.emplace_back(v.values().begin(), v.values().end());
  return out;
}

inline AffinityMatrix calibrate_affinities(const std::vector<EmbeddingVector>& x,
                                           double perplexity) {
  return calibrate_affinities(to_rows(x), perplexity);
}

/// Student-t kernel (1 + |y_i - y_j|^2)^-1; zero diagonal.
inline std::vector<double> student_kernel(const Layout& y) {
  const std::size_t n = y.size();
  std::vector<double> num(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i].x - y[j].x;
      const double dy = y[i].y - y[j].y;
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = v;
      num[j * n + i] = v;
    }
  }
  return num;
}

/// Low-dimensional joint probabilities q_ij.
inline std::vector<double> low_dim_affinities(const Layout& y) {
  std::vector<double> q = student_kernel(y);
  double z = 0.0;
  for (double v : q) z += v;
  for (auto& v : q) v /= z;
  return q;
}

/// Sum over entries with p > 0 of p log(p / q).
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorKind::kValidation, "KL operands differ in size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

inline double kl_divergence(const AffinityMatrix& p, const Layout& y) {
  return kl_divergence(p.p, low_dim_affinities(y));
}

/// dKL/dy_i = 4 sum_j (p_ij - q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j),
/// with every p_ij multiplied by `exaggeration`.
inline Layout tsne_gradient(std::span<const double> p, const Layout& y, double exaggeration = 1.0) {
  const std::size_t n = y.size();
  if (p.size() != n * n) throw Error(ErrorKind::kValidation, "P does not match layout size");
  const std::vector<double> num = student_kernel(y);
  double z = 0.0;
  for (double v : num) z += v;
  Layout grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0;
    double gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = num[i * n + j];
      const double m = (exaggeration * p[i * n + j] - w / z) * w;
      gx += m * (y[i].x - y[j].x);
      gy += m * (y[i].y - y[j].y);
    }
    grad[i] = {4.0 * gx, 4.0 * gy};
  }
  return grad;
}

inline Layout tsne_gradient(const AffinityMatrix& p, const Layout& y) {
  return tsne_gradient(p.p, y, 1.0);
}

struct Params {
  double perplexity = 30.0;
  std::size_t iters = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch_iter = 250;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double init_std = 1e-4;
  std::uint64_t seed = 42;
  std::size_t trace_every = 50;
};

struct KlSample {
  std::size_t iter = 0;
  double kl = 0.0;
};

struct ProjectionResult {
  Layout points;
  double kl = 0.0;  // on the unexaggerated P
  std::size_t iterations = 0;
  double perplexity = 0.0;  // after clamping
  std::vector<KlSample> kl_trace;
  std::vector<std::string> warnings;

  /// KL recorded at `iter`, if that iteration was traced.
  std::optional<double> kl_at(std::size_t iter) const {
    for (const auto& s : kl_trace) {
      if (s.iter == iter) return s.kl;
    }
    return std::nullopt;
  }
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; avoids std::normal_distribution so layouts match across
// standard libraries.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Exact t-SNE by gradient descent with momentum from a seeded Gaussian
/// start. P is exaggerated for the first `exaggeration_iters` iterations;
/// momentum switches at `momentum_switch_iter`.
inline ProjectionResult tsne_embed(const Rows& x, const Params& params) {
  if (x.size() < 4) {
    throw Error(ErrorKind::kPrecondition,
                "t-SNE needs at least 4 points, got " + std::to_string(x.size()));
  }
  const AffinityMatrix p = calibrate_affinities(x, params.perplexity);
  const std::size_t n = x.size();
  ProjectionResult out;
  out.perplexity = p.perplexity;
  out.warnings = p.warnings;

  std::mt19937_64 rng(params.seed);
  Layout y(n);
  for (auto& pt : y) {
    pt.x = params.init_std * detail::standard_normal(rng);
    pt.y = params.init_std * detail::standard_normal(rng);
  }
  Layout velocity(n);

  for (std::size_t iter = 1; iter <= params.iters; ++iter) {
    const double exaggeration = iter <= params.exaggeration_iters ? params.exaggeration : 1.0;
    const double momentum =
        iter <= params.momentum_switch_iter ? params.initial_momentum : params.final_momentum;
    const Layout grad = tsne_gradient(p.p, y, exaggeration);
    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      velocity[i].x = momentum * velocity[i].x - params.learning_rate * grad[i].x;
      velocity[i].y = momentum * velocity[i].y - params.learning_rate * grad[i].y;
      y[i].x += velocity[i].x;
      y[i].y += velocity[i].y;
      cx += y[i].x;
      cy += y[i].y;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    for (auto& pt : y) {
      pt.x -= cx;
      pt.y -= cy;
      if (!std::isfinite(pt.x) || !std::isfinite(pt.y)) {
        throw Error(ErrorKind::kNumericFailure,
                    "t-SNE diverged at iteration " + std::to_string(iter));
      }
    }
    const bool traced = (params.trace_every && iter % params.trace_every == 0) ||
                        iter == params.exaggeration_iters || iter == params.iters;
    if (traced) out.kl_trace.push_back({iter, kl_divergence(p, y)});
  }
  out.points = std::move(y);
  out.iterations = params.iters;
  out.kl = out.kl_trace.empty() ? kl_divergence(p, out.points) : out.kl_trace.back().kl;
  if (!std::isfinite(out.kl)) {
    throw Error(ErrorKind::kNumericFailure, "t-SNE produced a non-finite KL divergence");
  }
  return out;
}

inline ProjectionResult tsne_embed(const std::vector<EmbeddingVector>& x, const Params& params) {
  return tsne_embed(to_rows(x), params);
}

}  // namespace chatsos::tsne
