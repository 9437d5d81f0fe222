#include "medeval/knowledge.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "medeval/error.hpp"
#include "medeval/util.hpp"

namespace medeval::knowledge {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(Errc::InvalidValue, "embedder dim must be positive");
}

std::vector<float> HashEmbedder::embed(std::string_view text) const {
  std::vector<double> acc(dim_, 0.0);
  for (const auto& tok : tokenize(text)) {
    const auto h = fnv1a64(tok);
    acc[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_, 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

std::string HashEmbedder::fingerprint() const { return "hash-fnv1a-signed/v1/dim=" + std::to_string(dim_); }

std::vector<DocumentChunk> chunk_document(std::string_view doc_text, std::size_t window, std::size_t overlap) {
  if (window == 0 || overlap >= window) {
    throw Error(Errc::InvalidWindow, "chunking requires 0 <= overlap < window",
                {{"window", window}, {"overlap", overlap}});
  }
  const auto words = split_words(doc_text);
  std::vector<DocumentChunk> out;
  const std::size_t step = window - overlap;
  for (std::size_t start = 0; start < words.size(); start += step) {
    const std::size_t end = std::min(start + window, words.size());
    std::span<const std::string> slice(words.data() + start, end - start);
    out.push_back({{start, end}, join(slice, " ")});
    if (end == words.size()) break;
  }
  return out;
}

namespace {

void normalize_into(KnowledgeChunk& c) {
  double norm = 0.0;
  for (float v : c.embedding) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(Errc::EmbedderFailure, "chunk " + std::to_string(c.chunk_id) + " has a zero or non-finite embedding",
                {{"chunk_id", c.chunk_id}, {"source_doc", c.source_doc}});
  }
  for (auto& v : c.embedding) v = static_cast<float>(v / norm);
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

VectorIndex VectorIndex::build(const std::vector<ChunkInput>& chunks, const Embedder& embedder) {
  std::vector<KnowledgeChunk> out;
  out.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& in = chunks[i];
    if (is_blank(in.text)) throw Error(Errc::InvalidValue, "blank chunk text at " + std::to_string(i));
    KnowledgeChunk c{i, in.source_doc, in.span, in.text, {}};
    try {
      c.embedding = embedder.embed(in.text);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(Errc::EmbedderFailure, std::string("embedder failed: ") + e.what(), {{"chunk_id", i}});
    }
    if (c.embedding.size() != embedder.dim()) {
      throw Error(Errc::EmbedderFailure, "embedder returned wrong dimension", {{"chunk_id", i}});
    }
    out.push_back(std::move(c));
  }
  auto index = from_embeddings(std::move(out), embedder.fingerprint());
  index.dim_ = embedder.dim();
  return index;
}

VectorIndex VectorIndex::from_embeddings(std::vector<KnowledgeChunk> chunks, std::string fingerprint) {
  VectorIndex index;
  index.fingerprint_ = std::move(fingerprint);
  if (!chunks.empty()) index.dim_ = chunks.front().embedding.size();
  for (auto& c : chunks) {
    if (c.embedding.size() != index.dim_) throw Error(Errc::EmbedderFailure, "inconsistent embedding dimensions");
    normalize_into(c);
  }
  index.chunks_ = std::move(chunks);
  return index;
}

std::vector<Hit> VectorIndex::query(std::string_view text, std::size_t k, const Embedder& embedder) const {
  if (empty()) throw Error(Errc::EmptyIndex, "query against an empty index");
  if (embedder.fingerprint() != fingerprint_) {
    throw Error(Errc::EmbedderMismatch, "query embedder '" + embedder.fingerprint() + "' does not match index '" +
                                            fingerprint_ + "'");
  }
  return query_vector(embedder.embed(text), k);
}

std::vector<Hit> VectorIndex::query_vector(std::vector<float> q, std::size_t k) const {
  if (empty()) throw Error(Errc::EmptyIndex, "query against an empty index");
  if (k == 0) throw Error(Errc::InvalidValue, "k must be >= 1");
  if (q.size() != dim_) throw Error(Errc::EmbedderMismatch, "query dimension mismatch");
  double norm = 0.0;
  for (float v : q) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  std::vector<Hit> hits;
  hits.reserve(chunks_.size());
  for (const auto& c : chunks_) {
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += static_cast<double>(q[i]) * c.embedding[i];
    // A query with no features is equally (un)related to everything.
    double sim = norm > 0.0 ? dot / norm : 0.0;
    hits.push_back({&c, std::clamp(sim, -1.0, 1.0)});
  }
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    [](const Hit& a, const Hit& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.chunk->chunk_id < b.chunk->chunk_id;
                    });
  hits.resize(take);
  return hits;
}

void VectorIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& c : chunks_) {
    lines += json{{"chunk_id", c.chunk_id},
                  {"source_doc", c.source_doc},
                  {"span", {c.span.start_word, c.span.end_word}},
                  {"text", c.text}}
                 .dump();
    lines += '\n';
  }
  write_file_atomic(dir / "chunks.jsonl", lines);

  std::string bin;
  bin.reserve(8 + chunks_.size() * dim_ * 4);
  put_u32(bin, static_cast<std::uint32_t>(chunks_.size()));
  put_u32(bin, static_cast<std::uint32_t>(dim_));
  for (const auto& c : chunks_) {
    for (float v : c.embedding) put_u32(bin, std::bit_cast<std::uint32_t>(v));
  }
  write_file_atomic(dir / "embeddings.bin", bin);
  write_file_atomic(dir / "store.json", json{{"fingerprint", fingerprint_}, {"dim", dim_}}.dump(2) + "\n");
}

VectorIndex VectorIndex::load(const std::filesystem::path& dir) {
  const auto meta = json::parse(read_file(dir / "store.json"));
  const auto bin = read_file(dir / "embeddings.bin");
  if (bin.size() < 8) throw Error(Errc::CorruptIndex, "embeddings.bin shorter than its header");
  const auto* p = reinterpret_cast<const unsigned char*>(bin.data());
  const std::uint32_t count = get_u32(p);
  const std::uint32_t dim = get_u32(p + 4);
  if (bin.size() != 8 + static_cast<std::size_t>(count) * dim * 4) {
    throw Error(Errc::CorruptIndex, "embeddings.bin size does not match its header");
  }
  if (dim != meta.at("dim").get<std::size_t>()) throw Error(Errc::CorruptIndex, "store.json dim mismatch");

  VectorIndex index;
  index.dim_ = dim;
  index.fingerprint_ = meta.at("fingerprint").get<std::string>();
  std::size_t row = 0;
  for (const auto& line : read_lines(dir / "chunks.jsonl")) {
    if (is_blank(line)) continue;
    if (row >= count) throw Error(Errc::CorruptIndex, "more chunks than embeddings");
    const auto j = json::parse(line);
    KnowledgeChunk c;
    c.chunk_id = j.at("chunk_id").get<std::size_t>();
    c.source_doc = j.at("source_doc").get<std::string>();
    c.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
    c.text = j.at("text").get<std::string>();
    c.embedding.resize(dim);
    const unsigned char* r = p + 8 + row * dim * 4;
    for (std::size_t i = 0; i < dim; ++i) c.embedding[i] = std::bit_cast<float>(get_u32(r + 4 * i));
    index.chunks_.push_back(std::move(c));
    ++row;
  }
  if (row != count) throw Error(Errc::CorruptIndex, "fewer chunks than embeddings");
  return index;
}

std::vector<ChunkInput> chunk_directory(const std::filesystem::path& dir, std::size_t window, std::size_t overlap) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::FileNotFound, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ChunkInput> out;
  for (const auto& f : files) {
    for (auto& ch : chunk_document(read_file(f), window, overlap)) {
      out.push_back({f.filename().string(), ch.span, std::move(ch.text)});
    }
  }
  return out;
}

}  // namespace medeval::knowledge
