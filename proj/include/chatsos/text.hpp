#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "chatsos/error.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos {

namespace detail {

constexpr bool is_removed_control(char32_t cp) {
  return (cp < 0x20 && cp != U'\n') || (cp >= 0x7F && cp <= 0x9F);
}

inline std::string nfc(const std::string& in) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::kInternal, "ICU NFC normalizer unavailable");
  }
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(in);
  icu::UnicodeString dst = normalizer->normalize(src, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::kInternal, "ICU NFC normalization failed");
  }
  std::string out;
  dst.toUTF8String(out);
  return out;
}

}  // namespace detail

/// Canonical text form used before chunking and embedding.
///
/// CR/CRLF become LF, tabs become spaces, other control characters are
/// dropped, the result is NFC-normalized, space runs collapse to one space,
/// each line is trimmed, and blank-line runs are capped at one empty line.
/// Leading and trailing newlines of the whole text are removed.
inline std::string normalize_text(std::string_view text) {
  const std::u32string in = utf8::decode(text);
  std::u32string cleaned;
  cleaned.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    char32_t cp = in[i];
    if (cp == U'\r') {
      if (i + 1 < in.size() && in[i + 1] == U'\n') continue;
      cp = U'\n';
    }
    if (cp == U'\t') cp = U' ';
    if (detail::is_removed_control(cp)) continue;
    cleaned.push_back(cp);
  }

  // Control removal happens before NFC so that no base/mark pair is joined
  // after composition has run.
  const std::u32string composed = utf8::decode(detail::nfc(utf8::encode(cleaned)));

  std::u32string lines;
  lines.reserve(composed.size());
  std::u32string line;
  auto flush_line = [&]() {
    std::size_t b = 0;
    std::size_t e = line.size();
    while (b < e && line[b] == U' ') ++b;
    while (e > b && line[e - 1] == U' ') --e;
    lines.append(line, b, e - b);
    line.clear();
  };
  for (char32_t cp : composed) {
    if (cp == U'\n') {
      flush_line();
      lines.push_back(U'\n');
    } else if (cp == U' ' && !line.empty() && line.back() == U' ') {
      continue;
    } else {
      line.push_back(cp);
    }
  }
  flush_line();

  std::u32string out;
  out.reserve(lines.size());
  std::size_t newline_run = 0;
  for (char32_t cp : lines) {
    if (cp == U'\n') {
      if (++newline_run > 2) continue;
    } else {
      newline_run = 0;
    }
    out.push_back(cp);
  }
  std::size_t b = 0;
  std::size_t e = out.size();
  while (b < e && out[b] == U'\n') ++b;
  while (e > b && out[e - 1] == U'\n') --e;
  return utf8::encode(std::u32string_view(out).substr(b, e - b));
}

constexpr bool is_sentence_terminator(char32_t cp) {
  return cp == U'。' || cp == U'．' || cp == U'.' || cp == U'!' ||
         cp == U'?' || cp == U'！' || cp == U'？' || cp == U'\n';
}

/// Sliding-window split parameters, in Unicode scalar values.
struct ChunkPolicy {
  std::size_t chunk_size = 1000;
  std::size_t overlap = 200;

  void validate() const {
    if (chunk_size == 0) {
      throw Error(ErrorKind::kValidation, "chunk_size must be positive");
    }
    if (overlap >= chunk_size) {
      throw Error(ErrorKind::kValidation, "overlap must be smaller than chunk_size");
    }
  }

  std::size_t stride() const { return chunk_size - overlap; }
};

struct TextChunk {
  std::size_t offset = 0;  // in scalar values
  std::string text;

  bool operator==(const TextChunk&) const = default;
};

/// Splits normalized text into overlapping windows.
///
/// Windows start at 0 and each next window starts `overlap` characters before
/// the previous window's end. A window's end is pulled back to just after the
/// last sentence terminator in its trailing fifth, as long as the next start
/// still advances. Terminator-free text therefore gets starts 0, s, 2s, ...
/// with s = chunk_size - overlap. The last window always ends at the text end.
inline std::vector<TextChunk> chunk_text(std::string_view text, const ChunkPolicy& policy) {
  policy.validate();
  const std::u32string cps = utf8::decode(text);
  const std::size_t total = cps.size();
  std::vector<TextChunk> chunks;
  if (total == 0) return chunks;

  const std::size_t size = policy.chunk_size;
  const std::size_t overlap = policy.overlap;
  const std::size_t snap_window = size / 5;
  std::size_t offset = 0;
  for (;;) {
    if (offset + size >= total) {
      chunks.push_back({offset, utf8::encode(std::u32string_view(cps).substr(offset))});
      break;
    }
    std::size_t end = offset + size;
    for (std::size_t i = end; i-- > end - snap_window;) {
      if (is_sentence_terminator(cps[i])) {
        if (i + 1 > offset + overlap) end = i + 1;
        break;
      }
    }
    chunks.push_back(
        {offset, utf8::encode(std::u32string_view(cps).substr(offset, end - offset))});
    offset = end - overlap;
  }
  return chunks;
}

}  // namespace chatsos
