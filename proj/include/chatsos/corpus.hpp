#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/store.hpp"
#include "chatsos/text.hpp"

namespace chatsos {

struct SourceDocument {
  std::string doc_id;
  std::optional<std::string> title;
  std::string text;
  Metadata metadata;

  bool operator==(const SourceDocument&) const = default;
};

/// Reads JSONL: one object per line with string "doc_id" and "text", an
/// optional string "title"; other string-valued keys become metadata.
/// Blank lines are skipped. Errors carry the 1-based line number.
inline std::vector<SourceDocument> parse_corpus_file(std::string_view bytes) {
  std::vector<SourceDocument> docs;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    std::string_view line =
        bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const std::string where = "line " + std::to_string(line_no) + ": ";
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::kParse, where + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw Error(ErrorKind::kSchema, where + "expected a JSON object");
    for (const char* key : {"doc_id", "text"}) {
      if (!obj.contains(key)) {
        throw Error(ErrorKind::kSchema, where + "missing required field \"" + key + "\"");
      }
      if (!obj[key].is_string()) {
        throw Error(ErrorKind::kSchema, where + "field \"" + key + "\" must be a string");
      }
    }
    SourceDocument doc;
    doc.doc_id = obj["doc_id"].get<std::string>();
    doc.text = obj["text"].get<std::string>();
    if (doc.doc_id.empty()) throw Error(ErrorKind::kSchema, where + "\"doc_id\" is empty");
    if (obj.contains("title")) {
      if (!obj["title"].is_string()) {
        throw Error(ErrorKind::kSchema, where + "field \"title\" must be a string");
      }
      doc.title = obj["title"].get<std::string>();
    }
    for (const auto& [key, value] : obj.items()) {
      if (key == "doc_id" || key == "text" || key == "title") continue;
      if (value.is_string()) doc.metadata[key] = value.get<std::string>();
    }
    if (!seen.insert(doc.doc_id).second) {
      throw Error(ErrorKind::kUniqueness, where + "duplicate doc_id \"" + doc.doc_id + "\"");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

struct DocumentError {
  std::string doc_id;
  ErrorKind kind = ErrorKind::kInternal;
  std::string message;
};

struct IngestReport {
  std::size_t docs_accepted = 0;
  std::size_t docs_rejected = 0;
  std::size_t chunks_created = 0;
  std::size_t vectors_inserted = 0;
  std::vector<DocumentError> errors;
};

inline Json to_json(const IngestReport& r) {
  Json errors = Json::array();
  for (const auto& e : r.errors) {
    errors.push_back({{"doc_id", e.doc_id}, {"kind", to_string(e.kind)}, {"message", e.message}});
  }
  return {{"docs_accepted", r.docs_accepted},
          {"docs_rejected", r.docs_rejected},
          {"chunks_created", r.chunks_created},
          {"vectors_inserted", r.vectors_inserted},
          {"errors", errors}};
}

/// Normalizes, chunks, embeds and stores each document. A document is
/// either stored completely (all chunks in both halves) or not at all.
inline IngestReport ingest_pipeline(const std::vector<SourceDocument>& docs,
                                    const ChunkPolicy& policy, const Embedder& embedder,
                                    KnowledgeStore& store) {
  policy.validate();
  if (embedder.dim() != store.dim()) {
    throw Error(ErrorKind::kConfiguration, "embedder dim " + std::to_string(embedder.dim()) +
                                               " does not match store dim " +
                                               std::to_string(store.dim()));
  }
  IngestReport report;
  std::set<std::string> batch_ids;
  auto reject = [&](const std::string& doc_id, ErrorKind kind, std::string message) {
    ++report.docs_rejected;
    report.errors.push_back({doc_id, kind, std::move(message)});
  };

  for (const auto& doc : docs) {
    if (doc.doc_id.empty()) {
      reject(doc.doc_id, ErrorKind::kValidation, "empty doc_id");
      continue;
    }
    if (!batch_ids.insert(doc.doc_id).second) {
      reject(doc.doc_id, ErrorKind::kUniqueness, "duplicate doc_id in batch");
      continue;
    }
    if (store.has_doc(doc.doc_id)) {
      reject(doc.doc_id, ErrorKind::kUniqueness, "doc_id already present in store");
      continue;
    }
    const std::string normalized = normalize_text(doc.text);
    if (normalized.empty()) {
      reject(doc.doc_id, ErrorKind::kValidation, "text is empty after normalization");
      continue;
    }
    const auto chunks = chunk_text(normalized, policy);
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);

    try {
      const auto vectors = embedder.embed(texts);
      if (vectors.size() != chunks.size()) {
        throw Error(ErrorKind::kProtocol, "embedder returned wrong number of vectors");
      }
      Metadata metadata = doc.metadata;
      if (doc.title) metadata["title"] = *doc.title;
      std::vector<std::pair<ChunkRecord, EmbeddingVector>> entries;
      entries.reserve(chunks.size());
      for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto seq = static_cast<std::uint32_t>(i);
        ChunkRecord record{make_chunk_id(doc.doc_id, seq), doc.doc_id, seq, chunks[i].offset,
                           chunks[i].text, metadata};
        entries.emplace_back(std::move(record), vectors[i]);
      }
      store.insert_batch(std::move(entries));
    } catch (const Error& e) {
      reject(doc.doc_id, e.kind(), e.what());
      continue;
    }
    ++report.docs_accepted;
    report.chunks_created += chunks.size();
    report.vectors_inserted += chunks.size();
  }
  return report;
}

}  // namespace chatsos
