#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "chatsos/error.hpp"
#include "chatsos/store.hpp"

// Snapshot layout (little-endian):
//   "CSOS" | u16 version=1 | u32 dim | u64 count
//   count x { 16B chunk_id | dim x f32 | u32 len + doc_id | u32 seq | u64 offset
//             | u64 len + text | u32 pairs x (u32 len + key, u32 len + value) }
//   u32 CRC32 of everything above

namespace chatsos {

namespace binio {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  void put_str32(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  void put_str64(std::string_view s) {
    put(static_cast<std::uint64_t>(s.size()));
    put_bytes(s);
  }
  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Bounds-checked reader; running past the end throws `on_short`.
class Reader {
 public:
  Reader(std::string_view data, ErrorKind on_short) : data_(data), on_short_(on_short) {}

  template <typename T>
  T get() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string_view get_bytes(std::uint64_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string get_str32() { return std::string(get_bytes(get<std::uint32_t>())); }
  std::string get_str64() { return std::string(get_bytes(get<std::uint64_t>())); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw Error(on_short_, "unexpected end of data");
  }

  std::string_view data_;
  ErrorKind on_short_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in slices for very large snapshots.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes via a temporary file and rename so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace binio

inline constexpr std::array<char, 4> kSnapshotMagic = {'C', 'S', 'O', 'S'};
inline constexpr std::uint16_t kSnapshotVersion = 1;

inline std::string serialize_snapshot(const KnowledgeStore& store) {
  if (!store.check_integrity().empty()) {
    throw Error(ErrorKind::kInternal, "refusing to snapshot a store that fails integrity checks");
  }
  return store.read([](const VectorIndex& vectors, const RecordStore& records) {
    binio::Writer w;
    w.put_bytes(std::string_view(kSnapshotMagic.data(), kSnapshotMagic.size()));
    w.put(kSnapshotVersion);
    w.put(static_cast<std::uint32_t>(vectors.dim()));
    w.put(static_cast<std::uint64_t>(records.size()));
    for (const auto& [id, record] : records.records()) {
      w.put_bytes(std::string_view(reinterpret_cast<const char*>(id.data), 16));
      for (float f : vectors.find(id)) w.put_f32(f);
      w.put_str32(record.doc_id);
      w.put(record.seq);
      w.put(record.offset);
      w.put_str64(record.text);
      w.put(static_cast<std::uint32_t>(record.metadata.size()));
      for (const auto& [k, v] : record.metadata) {
        w.put_str32(k);
        w.put_str32(v);
      }
    }
    const std::uint32_t crc = binio::crc32_of(w.bytes());
    w.put(crc);
    return w.take();
  });
}

/// Rebuilds a store. Checks magic (format error), version (version error),
/// then the trailing checksum and record framing (corruption error).
inline KnowledgeStore deserialize_snapshot(std::string_view bytes) {
  if (bytes.size() < kSnapshotMagic.size() ||
      std::memcmp(bytes.data(), kSnapshotMagic.data(), kSnapshotMagic.size()) != 0) {
    throw Error(ErrorKind::kFormat, "not a knowledge store snapshot (bad magic)");
  }
  binio::Reader header(bytes.substr(kSnapshotMagic.size()), ErrorKind::kCorruption);
  const auto version = header.get<std::uint16_t>();
  if (version != kSnapshotVersion) {
    throw Error(ErrorKind::kVersion, "unsupported snapshot version " + std::to_string(version));
  }
  if (bytes.size() < kSnapshotMagic.size() + 2 + 4 + 8 + 4) {
    throw Error(ErrorKind::kCorruption, "snapshot truncated");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  binio::Reader trailer(bytes.substr(bytes.size() - 4), ErrorKind::kCorruption);
  if (trailer.get<std::uint32_t>() != binio::crc32_of(body)) {
    throw Error(ErrorKind::kCorruption, "snapshot checksum mismatch");
  }

  binio::Reader r(body.substr(kSnapshotMagic.size() + 2), ErrorKind::kCorruption);
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dim == 0) throw Error(ErrorKind::kCorruption, "snapshot has zero dimension");
  KnowledgeStore store(dim);
  std::vector<std::pair<ChunkRecord, EmbeddingVector>> entries;
  try {
    for (std::uint64_t n = 0; n < count; ++n) {
      ChunkRecord record;
      const auto raw_id = r.get_bytes(16);
      std::memcpy(record.chunk_id.data, raw_id.data(), 16);
      std::vector<float> values(dim);
      for (auto& f : values) f = r.get_f32();
      record.doc_id = r.get_str32();
      record.seq = r.get<std::uint32_t>();
      record.offset = r.get<std::uint64_t>();
      record.text = r.get_str64();
      const auto pairs = r.get<std::uint32_t>();
      for (std::uint32_t p = 0; p < pairs; ++p) {
        std::string key = r.get_str32();
        record.metadata[std::move(key)] = r.get_str32();
      }
      entries.emplace_back(std::move(record), EmbeddingVector::from_unit(std::move(values)));
    }
    if (r.remaining() != 0) throw Error(ErrorKind::kCorruption, "trailing bytes in snapshot");
    store.insert_batch(std::move(entries));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCorruption) throw;
    throw Error(ErrorKind::kCorruption, std::string("invalid snapshot content: ") + e.what());
  }
  return store;
}

inline void snapshot_save(const KnowledgeStore& store, const std::filesystem::path& path) {
  binio::write_file_atomic(path, serialize_snapshot(store));
}

inline KnowledgeStore snapshot_load(const std::filesystem::path& path) {
  return deserialize_snapshot(binio::read_file(path));
}

}  // namespace chatsos
