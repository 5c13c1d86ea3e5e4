#pragma once

// Token embeddings for a document and their alignment to EDU spans.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "race/rst.hpp"

namespace race {

using CharSpan = std::pair<std::size_t, std::size_t>;  // [start, end)

struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// K x d contextual embeddings plus the character span of every token.
struct TokenEmbeddingMatrix {
  Eigen::MatrixXd embeddings;
  std::vector<CharSpan> token_offsets;
  /// True only when the producing encoder back-propagates into its final
  /// layer. Both encoders shipped here are frozen.
  bool gradients_flow = false;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t rows() const { return static_cast<std::size_t>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }
};

/// Checks K >= 1, finite rows, and non-decreasing offsets within `text_size`.
void validate_embeddings(const TokenEmbeddingMatrix& emb, std::size_t text_size);

/// Inclusive token range [first, last] for every EDU, in tree.edus order.
struct SpanAlignment {
  std::vector<std::pair<int, int>> ranges;
  std::vector<bool> borrowed;  // range was taken from a neighbouring token
};

/// Word/punctuation tokenizer used by the mock encoder: maximal runs of
/// alphanumerics, or single punctuation characters; whitespace is skipped.
std::vector<Token> mock_tokenize(std::string_view text);

/// Row k is a unit vector drawn from a generator seeded by (token_k, k, seed).
TokenEmbeddingMatrix mock_embed(std::string_view text, int dim, std::uint64_t seed);

/// Each token belongs to the EDU containing its first character (or, when it
/// starts between EDUs, the first EDU it overlaps). An EDU left without
/// tokens borrows the nearest preceding token; with `borrow_empty` false that
/// case throws AlignmentGap.
SpanAlignment align_spans(const RstTree& tree, const TokenEmbeddingMatrix& emb,
                          bool borrow_empty = true);

/// Window layout for encoders with a bounded context: windows of `window`
/// tokens advancing by window - overlap, the last one ending at K.
std::vector<CharSpan> plan_chunks(std::size_t num_tokens, std::size_t window, std::size_t overlap);

/// Builds the K-row matrix from per-window rows. A token covered by several
/// windows takes its row from the window in which it sits farthest from a
/// window edge (earlier window on ties).
Eigen::MatrixXd stitch_chunks(std::size_t num_tokens, const std::vector<CharSpan>& chunks,
                              const std::vector<Eigen::MatrixXd>& chunk_rows);

/// Index of the window a token's row comes from under stitch_chunks.
std::size_t owning_chunk(std::size_t token, const std::vector<CharSpan>& chunks);

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::string name() const = 0;
  virtual std::string revision() const = 0;
  virtual int dim() const = 0;
  virtual bool trainable_final_layer() const { return false; }
  virtual TokenEmbeddingMatrix embed(std::string_view text) const = 0;
};

/// Deterministic CPU-only stand-in for a pretrained encoder.
///
/// With a positive `window`, documents longer than the window are embedded
/// window by window and stitched exactly as an external encoder would be;
/// since mock rows depend only on (token, position) the result is identical.
class MockEncoder final : public Encoder {
 public:
  MockEncoder(int dim, std::uint64_t seed, std::size_t window = 0, std::size_t overlap = 64)
      : dim_(dim), seed_(seed), window_(window), overlap_(overlap) {}

  std::string name() const override { return "mock"; }
  std::string revision() const override;
  int dim() const override { return dim_; }
  TokenEmbeddingMatrix embed(std::string_view text) const override;

 private:
  int dim_;
  std::uint64_t seed_;
  std::size_t window_;
  std::size_t overlap_;
};

struct ExternalEncoderConfig {
  std::string command;  // shell command; reads text on stdin, prints JSON
  std::string name = "roberta-base";
  std::string revision = "main";
  int dim = 768;
  std::size_t window = 512;
  std::size_t overlap = 64;
  bool allow_chunking = true;
};

/// Runs a helper process that tokenizes the document, embeds it window by
/// window and prints {"offsets": [[s,e],...], "chunks": [{"start": i,
/// "embeddings": [[...], ...]}]}. The C++ side owns the window plan and the
/// stitching.
class ExternalEncoder final : public Encoder {
 public:
  explicit ExternalEncoder(ExternalEncoderConfig config) : config_(std::move(config)) {}

  std::string name() const override { return config_.name; }
  std::string revision() const override { return config_.revision; }
  int dim() const override { return config_.dim; }
  TokenEmbeddingMatrix embed(std::string_view text) const override;

  /// Converts the helper's JSON into a stitched matrix; exposed for tests.
  TokenEmbeddingMatrix decode_response(const nlohmann::json& response, std::size_t text_size) const;

 private:
  ExternalEncoderConfig config_;
};

/// Per-document binary blobs keyed by (doc_id, encoder name, revision).
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::string root) : root_(std::move(root)) {}

  std::string path_for(std::string_view doc_id, const Encoder& encoder) const;
  std::optional<TokenEmbeddingMatrix> load(std::string_view doc_id, const Encoder& encoder) const;
  void store(std::string_view doc_id, const Encoder& encoder, const TokenEmbeddingMatrix& emb) const;

  /// Cached embedding, computing and storing it on a miss.
  TokenEmbeddingMatrix get_or_embed(std::string_view doc_id, std::string_view text,
                                    const Encoder& encoder) const;

 private:
  std::string root_;
};

void write_embedding_blob(const std::string& path, const TokenEmbeddingMatrix& emb);
TokenEmbeddingMatrix read_embedding_blob(const std::string& path);

/// Escapes a key so it is a single safe path component.
std::string sanitize_key(std::string_view key);

}  // namespace race
