#include <catch_amalgamated.hpp>

#include <random>
#include <string>

#include "chatsos/text.hpp"
#include "chatsos/utf8.hpp"

using namespace chatsos;

namespace {

std::string random_messy_text(std::mt19937_64& rng, std::size_t len) {
  static const char32_t kAlphabet[] = {
      U'a',     U'B',     U' ',     U' ',     U'\t',    U'\n',    U'\n',
      U'\r',    U'.',     U'?',     U'\0',    U'e',     0x0301,   0x0007,
      0x0085,   0x3000,   0x3002,   0x4E8B,   0x6545,   0x706B,   0x212B,
      0x00C5,   0x00E9,   0x1100,   0x1161,   0x1F600};
  std::u32string out;
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(kAlphabet[rng() % std::size(kAlphabet)]);
  }
  return utf8::encode(out);
}

std::string repeat(std::string_view unit, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += unit;
  return out;
}

}  // namespace

TEST_CASE("normalize_text examples", "[text]") {
  CHECK(normalize_text("A\r\nB") == "A\nB");
  CHECK(normalize_text("A\rB") == "A\nB");
  CHECK(normalize_text("A \t  B") == "A B");
  CHECK(normalize_text("  line one  \n\tline two\t") == "line one\nline two");
  CHECK(normalize_text("a\n\n\n\n\nb") == "a\n\nb");
  CHECK(normalize_text("\n\nbody\n\n") == "body");
  CHECK(normalize_text("x\x01y\x7fz") == "xyz");
  CHECK(normalize_text("") == "");
}

TEST_CASE("normalize_text applies NFC", "[text]") {
  CHECK(normalize_text("e\xCC\x81") == "\xC3\xA9");      // e + combining acute
  CHECK(normalize_text("\xE2\x84\xAB") == "\xC3\x85");   // ANGSTROM SIGN -> A with ring
  CHECK(normalize_text("\xE1\x84\x80\xE1\x85\xA1") == "\xEA\xB0\x80");  // jamo -> syllable
}

TEST_CASE("normalize_text is idempotent on random input", "[text][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::string x = random_messy_text(rng, rng() % 60);
    const std::string once = normalize_text(x);
    INFO("trial " << trial);
    REQUIRE(normalize_text(once) == once);
  }
}

TEST_CASE("normalize_text repairs invalid UTF-8", "[text]") {
  const std::string bad = std::string("ok") + '\xFF' + "done";
  CHECK(normalize_text(bad) == "ok\xEF\xBF\xBD" "done");
}

TEST_CASE("ChunkPolicy validation", "[text]") {
  CHECK_NOTHROW(ChunkPolicy{1000, 200}.validate());
  CHECK_THROWS_AS((ChunkPolicy{0, 0}.validate()), Error);
  CHECK_THROWS_AS((ChunkPolicy{100, 100}.validate()), Error);
  CHECK(ChunkPolicy{1000, 200}.stride() == 800);
}

TEST_CASE("chunk_text examples", "[text]") {
  const ChunkPolicy policy{1000, 200};

  const auto one = chunk_text(repeat("字", 500), policy);
  REQUIRE(one.size() == 1);
  CHECK(one[0].offset == 0);
  CHECK(utf8::length(one[0].text) == 500);

  const auto three = chunk_text(repeat("字", 2500), policy);
  REQUIRE(three.size() == 3);
  CHECK(three[0].offset == 0);
  CHECK(three[1].offset == 800);
  CHECK(three[2].offset == 1600);
  CHECK(utf8::length(three[2].text) == 900);

  CHECK(chunk_text("", policy).empty());
}

TEST_CASE("chunk_text counts scalar values, not bytes", "[text]") {
  // 3-byte characters: 12 chars = 36 bytes.
  const auto chunks = chunk_text(repeat("灾", 12), ChunkPolicy{5, 1});
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[1].offset == 4);
  CHECK(chunks[2].offset == 8);
  for (const auto& c : chunks) CHECK(utf8::length(c.text) <= 5);
}

TEST_CASE("chunk_text snaps to a terminator in the trailing fifth", "[text]") {
  // 10 chars, terminator at index 8 lies in the last 20% of a 10-char window.
  const std::string text = repeat("a", 8) + "。" + repeat("b", 15);
  const auto chunks = chunk_text(text, ChunkPolicy{10, 2});
  REQUIRE(chunks.size() >= 2);
  CHECK(chunks[0].text == repeat("a", 8) + "。");
  CHECK(chunks[1].offset == 7);
}

TEST_CASE("chunk_text ignores terminators before the trailing fifth", "[text]") {
  const std::string text = repeat("a", 3) + "。" + repeat("b", 20);
  const auto chunks = chunk_text(text, ChunkPolicy{10, 2});
  CHECK(utf8::length(chunks[0].text) == 10);
}

TEST_CASE("chunk_text invariants on random input", "[text][property]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t size = 5 + rng() % 60;
    const std::size_t overlap = rng() % size;
    const ChunkPolicy policy{size, overlap};
    const std::u32string text = utf8::decode(normalize_text(random_messy_text(rng, rng() % 400)));
    const auto chunks = chunk_text(utf8::encode(text), policy);
    INFO("trial " << trial << " size " << size << " overlap " << overlap);
    if (text.empty()) {
      REQUIRE(chunks.empty());
      continue;
    }
    REQUIRE(!chunks.empty());
    REQUIRE(chunks.front().offset == 0);
    std::vector<bool> covered(text.size(), false);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const std::u32string piece = utf8::decode(chunks[i].text);
      REQUIRE(piece.size() <= size);
      REQUIRE(text.substr(chunks[i].offset, piece.size()) == piece);
      for (std::size_t k = 0; k < piece.size(); ++k) covered[chunks[i].offset + k] = true;
      if (i > 0) {
        REQUIRE(chunks[i].offset > chunks[i - 1].offset);
        REQUIRE(chunks[i].offset - chunks[i - 1].offset <= policy.stride());
      }
    }
    const auto& last = chunks.back();
    REQUIRE(last.offset + utf8::decode(last.text).size() == text.size());
    for (bool c : covered) REQUIRE(c);
  }
}

TEST_CASE("chunk coverage reconstructs terminator-free text", "[text][property]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::u32string text;
    const std::size_t len = 1 + rng() % 3000;
    for (std::size_t i = 0; i < len; ++i) text.push_back(U'一' + static_cast<char32_t>(rng() % 500));
    const std::size_t size = 100 + rng() % 900;
    const ChunkPolicy policy{size, rng() % size};
    const auto chunks = chunk_text(utf8::encode(text), policy);
    std::u32string rebuilt;
    for (const auto& c : chunks) {
      const std::u32string piece = utf8::decode(c.text);
      const std::size_t skip = rebuilt.size() - c.offset;
      rebuilt += piece.substr(skip);
    }
    REQUIRE(rebuilt == text);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      REQUIRE(chunks[i].offset == i * policy.stride());
    }
  }
}
