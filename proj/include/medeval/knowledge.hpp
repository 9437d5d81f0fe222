#pragma once
// Reference-document store: word-window chunking, pluggable embedders, and an
// exact cosine-similarity index with on-disk persistence.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace medeval::knowledge {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  // Must be deterministic: same text, same vector.
  virtual std::vector<float> embed(std::string_view text) const = 0;
  // Identifies the embedding space; indexes and classifiers refuse to mix spaces.
  virtual std::string fingerprint() const = 0;
};

// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
// Runs fully offline; texts without tokens embed to the zero vector.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256);
  std::size_t dim() const override { return dim_; }
  std::vector<float> embed(std::string_view text) const override;
  std::string fingerprint() const override;

 private:
  std::size_t dim_;
};

std::vector<std::string> tokenize(std::string_view text);

struct Span {
  std::size_t start_word = 0;
  std::size_t end_word = 0;  // exclusive
  bool operator==(const Span&) const = default;
};

struct DocumentChunk {
  Span span;
  std::string text;
};

// Windows of `window` words advancing by window - overlap; the last window
// is truncated at the end of the document.
std::vector<DocumentChunk> chunk_document(std::string_view doc_text, std::size_t window, std::size_t overlap);

struct ChunkInput {
  std::string source_doc;
  Span span;
  std::string text;
};

struct KnowledgeChunk {
  std::size_t chunk_id = 0;
  std::string source_doc;
  Span span;
  std::string text;
  std::vector<float> embedding;  // unit L2 norm
};

struct Hit {
  const KnowledgeChunk* chunk = nullptr;
  double similarity = 0.0;
};

class VectorIndex {
 public:
  VectorIndex() = default;

  // Embeds and normalizes every chunk; chunk ids are assigned in input order.
  static VectorIndex build(const std::vector<ChunkInput>& chunks, const Embedder& embedder);
  // Takes precomputed embeddings (normalized here).
  static VectorIndex from_embeddings(std::vector<KnowledgeChunk> chunks, std::string fingerprint);

  // Exact scan. Sorted by similarity descending, ties by ascending chunk_id.
  std::vector<Hit> query(std::string_view text, std::size_t k, const Embedder& embedder) const;
  std::vector<Hit> query_vector(std::vector<float> q, std::size_t k) const;

  // <dir>/chunks.jsonl, <dir>/embeddings.bin (u32 count, u32 dim, float32
  // rows; all little-endian), <dir>/store.json (fingerprint, dim).
  void save(const std::filesystem::path& dir) const;
  static VectorIndex load(const std::filesystem::path& dir);

  std::size_t size() const noexcept { return chunks_.size(); }
  bool empty() const noexcept { return chunks_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const std::vector<KnowledgeChunk>& chunks() const noexcept { return chunks_; }

 private:
  std::vector<KnowledgeChunk> chunks_;
  std::size_t dim_ = 0;
  std::string fingerprint_;
};

// Chunks every *.txt/*.md file under `dir` (sorted by filename).
std::vector<ChunkInput> chunk_directory(const std::filesystem::path& dir, std::size_t window, std::size_t overlap);

inline constexpr std::size_t kDefaultWindow = 512;
inline constexpr std::size_t kDefaultOverlap = 64;
inline constexpr std::size_t kDefaultTopK = 3;

}  // namespace medeval::knowledge
