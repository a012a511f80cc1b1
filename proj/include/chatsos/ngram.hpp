#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chatsos/error.hpp"
#include "chatsos/snapshot.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos {

using Token = std::string;
using TokenSeq = std::vector<Token>;

inline const Token kBos = "<s>";
inline const Token kEos = "</s>";

/// Whitespace split for Latin-script text; every CJK codepoint is a token of
/// its own.
inline TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      flush();
    } else if (utf8::is_cjk(cp)) {
      flush();
      std::string t;
      utf8::append(t, cp);
      out.push_back(std::move(t));
    } else {
      utf8::append(current, cp);
    }
  }
  flush();
  return out;
}

/// Inverse of tokenize up to whitespace: adjacent non-CJK tokens get a space.
inline std::string detokenize(const TokenSeq& tokens) {
  auto is_cjk_token = [](const Token& t) {
    const auto cps = utf8::decode(t);
    return cps.size() == 1 && utf8::is_cjk(cps[0]);
  };
  std::string out;
  bool prev_latin = false;
  for (const auto& t : tokens) {
    const bool latin = !is_cjk_token(t);
    if (latin && prev_latin) out.push_back(' ');
    out += t;
    prev_latin = latin;
  }
  return out;
}

enum class DecodeMode { kGreedy, kSample };

struct GenerateOptions {
  std::size_t max_len = 64;
  std::uint64_t seed = 0;
  DecodeMode mode = DecodeMode::kGreedy;
  // EOS is not emitted before this many new tokens.
  std::size_t min_len = 0;
};

/// Order-n count model: p(w | s) = C(s, w) / C(s), or add-alpha smoothed
/// (C(s, w) + alpha) / (C(s) + alpha |V|) when alpha > 0.
class NgramModel {
 public:
  struct ContextStats {
    std::uint64_t total = 0;
    std::map<Token, std::uint64_t> next;
  };

  /// Pads each sequence with n-1 BOS markers and one EOS marker and counts
  /// every n-gram.
  static NgramModel train(const std::vector<TokenSeq>& sequences, std::size_t order,
                          double alpha = 1.0) {
    if (order == 0) throw Error(ErrorKind::kValidation, "n-gram order must be at least 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw Error(ErrorKind::kValidation, "smoothing constant must be finite and >= 0");
    }
    if (sequences.empty()) throw Error(ErrorKind::kValidation, "cannot train on an empty corpus");
    NgramModel m(order, alpha);
    m.vocab_.insert(kBos);
    m.vocab_.insert(kEos);
    for (const auto& seq : sequences) {
      TokenSeq padded(order - 1, kBos);
      for (const auto& t : seq) {
        if (t.empty()) throw Error(ErrorKind::kValidation, "tokens must be non-empty");
        padded.push_back(t);
        m.vocab_.insert(t);
      }
      padded.push_back(kEos);
      for (std::size_t i = order - 1; i < padded.size(); ++i) {
        TokenSeq ctx(padded.begin() + static_cast<std::ptrdiff_t>(i - (order - 1)),
                     padded.begin() + static_cast<std::ptrdiff_t>(i));
        auto& stats = m.contexts_[std::move(ctx)];
        ++stats.total;
        ++stats.next[padded[i]];
      }
    }
    return m;
  }

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const std::set<Token>& vocabulary() const noexcept { return vocab_; }
  const std::map<TokenSeq, ContextStats>& contexts() const noexcept { return contexts_; }

  /// Same counts, different smoothing constant.
  NgramModel with_alpha(double alpha) const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw Error(ErrorKind::kValidation, "smoothing constant must be finite and >= 0");
    }
    NgramModel m = *this;
    m.alpha_ = alpha;
    return m;
  }

  /// C(s); `context` is normalized to length n-1 first.
  std::uint64_t context_count(const TokenSeq& context) const {
    const auto it = contexts_.find(fit_context(context));
    return it == contexts_.end() ? 0 : it->second.total;
  }

  /// C(s, w).
  std::uint64_t count(const TokenSeq& context, const Token& w) const {
    const auto it = contexts_.find(fit_context(context));
    if (it == contexts_.end()) return 0;
    const auto jt = it->second.next.find(w);
    return jt == it->second.next.end() ? 0 : jt->second;
  }

  /// Contexts shorter than n-1 are left-padded with BOS; longer ones keep
  /// their last n-1 tokens.
  TokenSeq fit_context(const TokenSeq& context) const {
    const std::size_t want = order_ - 1;
    if (context.size() >= want) {
      return TokenSeq(context.end() - static_cast<std::ptrdiff_t>(want), context.end());
    }
    TokenSeq out(want - context.size(), kBos);
    out.insert(out.end(), context.begin(), context.end());
    return out;
  }

  double cond_prob(const TokenSeq& context, const Token& w) const {
    const TokenSeq ctx = fit_context(context);
    const auto it = contexts_.find(ctx);
    const std::uint64_t c_s = it == contexts_.end() ? 0 : it->second.total;
    std::uint64_t c_sw = 0;
    if (it != contexts_.end()) {
      const auto jt = it->second.next.find(w);
      if (jt != it->second.next.end()) c_sw = jt->second;
    }
    if (alpha_ == 0.0) {
      if (c_s == 0) throw Error(ErrorKind::kUnseenContext, "context never observed");
      return static_cast<double>(c_sw) / static_cast<double>(c_s);
    }
    return (static_cast<double>(c_sw) + alpha_) /
           (static_cast<double>(c_s) + alpha_ * static_cast<double>(vocab_.size()));
  }

  /// Natural-log probability of `tokens` followed by EOS under the order-n
  /// chain rule. Zero-probability factors (including unseen contexts in MLE
  /// mode) give -infinity.
  double seq_logprob(const TokenSeq& tokens) const {
    TokenSeq history(order_ - 1, kBos);
    history.insert(history.end(), tokens.begin(), tokens.end());
    history.push_back(kEos);
    double total = 0.0;
    for (std::size_t i = order_ - 1; i < history.size(); ++i) {
      const TokenSeq ctx(history.begin() + static_cast<std::ptrdiff_t>(i - (order_ - 1)),
                         history.begin() + static_cast<std::ptrdiff_t>(i));
      double p = 0.0;
      try {
        p = cond_prob(ctx, history[i]);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kUnseenContext) throw;
        p = 0.0;
      }
      if (p == 0.0) return -std::numeric_limits<double>::infinity();
      total += std::log(p);
    }
    return total;
  }

  /// Extends `prompt` until EOS or max_len new tokens. Greedy takes the most
  /// probable token (ties to the lexicographically smallest); sample draws
  /// from the smoothed distribution. BOS is never generated. Requires
  /// alpha > 0.
  TokenSeq generate(const TokenSeq& prompt, const GenerateOptions& opts) const {
    if (!(alpha_ > 0.0)) {
      throw Error(ErrorKind::kValidation, "generation requires a smoothed model (alpha > 0)");
    }
    TokenSeq history = prompt;
    TokenSeq out;
    std::mt19937_64 rng(opts.seed);
    while (out.size() < opts.max_len) {
      const bool allow_eos = out.size() >= opts.min_len;
      const Token next = opts.mode == DecodeMode::kGreedy ? pick_greedy(history, allow_eos)
                                                          : pick_sample(history, allow_eos, rng);
      if (next == kEos) break;
      out.push_back(next);
      history.push_back(next);
    }
    return out;
  }

  /// Binary form: "CSNG" | u16 version=1 | u32 order | f64 alpha |
  /// u32 vocab count + strings | u64 context count + per context
  /// (u32 len + tokens, u32 continuation count + (token, u64 count)) | CRC32.
  std::string serialize() const {
    binio::Writer w;
    w.put_bytes("CSNG");
    w.put(std::uint16_t{1});
    w.put(static_cast<std::uint32_t>(order_));
    w.put(std::bit_cast<std::uint64_t>(alpha_));
    w.put(static_cast<std::uint32_t>(vocab_.size()));
    for (const auto& t : vocab_) w.put_str32(t);
    w.put(static_cast<std::uint64_t>(contexts_.size()));
    for (const auto& [ctx, stats] : contexts_) {
      w.put(static_cast<std::uint32_t>(ctx.size()));
      for (const auto& t : ctx) w.put_str32(t);
      w.put(static_cast<std::uint32_t>(stats.next.size()));
      for (const auto& [t, c] : stats.next) {
        w.put_str32(t);
        w.put(c);
      }
    }
    w.put(binio::crc32_of(w.bytes()));
    return w.take();
  }

  static NgramModel deserialize(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "CSNG") {
      throw Error(ErrorKind::kFormat, "not an n-gram model file (bad magic)");
    }
    binio::Reader head(bytes.substr(4), ErrorKind::kCorruption);
    const auto version = head.get<std::uint16_t>();
    if (version != 1) {
      throw Error(ErrorKind::kVersion, "unsupported n-gram model version " + std::to_string(version));
    }
    if (bytes.size() < 10) throw Error(ErrorKind::kCorruption, "n-gram model truncated");
    const auto body = bytes.substr(0, bytes.size() - 4);
    binio::Reader crc(bytes.substr(bytes.size() - 4), ErrorKind::kCorruption);
    if (crc.get<std::uint32_t>() != binio::crc32_of(body)) {
      throw Error(ErrorKind::kCorruption, "n-gram model checksum mismatch");
    }
    binio::Reader r(body.substr(6), ErrorKind::kCorruption);
    const auto order = r.get<std::uint32_t>();
    const double alpha = std::bit_cast<double>(r.get<std::uint64_t>());
    if (order == 0 || !(alpha >= 0.0)) throw Error(ErrorKind::kCorruption, "bad n-gram header");
    NgramModel m(order, alpha);
    const auto vocab = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < vocab; ++i) m.vocab_.insert(r.get_str32());
    const auto contexts = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < contexts; ++i) {
      TokenSeq ctx(r.get<std::uint32_t>());
      for (auto& t : ctx) t = r.get_str32();
      ContextStats stats;
      const auto nexts = r.get<std::uint32_t>();
      for (std::uint32_t j = 0; j < nexts; ++j) {
        Token t = r.get_str32();
        const auto c = r.get<std::uint64_t>();
        stats.total += c;
        stats.next[std::move(t)] = c;
      }
      m.contexts_[std::move(ctx)] = std::move(stats);
    }
    if (r.remaining() != 0) throw Error(ErrorKind::kCorruption, "trailing bytes in n-gram model");
    return m;
  }

  void save(const std::filesystem::path& path) const {
    binio::write_file_atomic(path, serialize());
  }
  static NgramModel load(const std::filesystem::path& path) {
    return deserialize(binio::read_file(path));
  }

 private:
  NgramModel(std::size_t order, double alpha) : order_(order), alpha_(alpha) {}

  Token pick_greedy(const TokenSeq& history, bool allow_eos) const {
    // Smoothing is monotone in C(s, w), so the argmax is the most frequent
    // observed continuation; with no usable observation every token ties.
    const auto it = contexts_.find(fit_context(history));
    const Token* best = nullptr;
    std::uint64_t best_count = 0;
    if (it != contexts_.end()) {
      for (const auto& [t, c] : it->second.next) {  // lexicographic order
        if (!allow_eos && t == kEos) continue;
        if (c > best_count) {
          best = &t;
          best_count = c;
        }
      }
    }
    if (best) return *best;
    for (const auto& t : vocab_) {
      if (t == kBos || (!allow_eos && t == kEos)) continue;
      return t;
    }
    return kEos;
  }

  Token pick_sample(const TokenSeq& history, bool allow_eos, std::mt19937_64& rng) const {
    const TokenSeq ctx = fit_context(history);
    double mass = 0.0;
    for (const auto& t : vocab_) {
      if (t == kBos || (!allow_eos && t == kEos)) continue;
      mass += cond_prob(ctx, t);
    }
    // 53 random bits -> [0, 1), identical on every standard library.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * mass;
    double acc = 0.0;
    const Token* last = nullptr;
    for (const auto& t : vocab_) {
      if (t == kBos || (!allow_eos && t == kEos)) continue;
      acc += cond_prob(ctx, t);
      last = &t;
      if (u < acc) return t;
    }
    return last ? *last : kEos;
  }

  std::size_t order_;
  double alpha_;
  std::set<Token> vocab_;
  std::map<TokenSeq, ContextStats> contexts_;
};

}  // namespace chatsos
