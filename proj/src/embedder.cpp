#include "race/embedder.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "race/common.hpp"

namespace race {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kBlobMagic[8] = {'R', 'A', 'C', 'E', 'E', 'M', 'B', '1'};

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorKind::IoError, "truncated embedding blob");
  return value;
}

}  // namespace

void validate_embeddings(const TokenEmbeddingMatrix& emb, std::size_t text_size) {
  if (emb.rows() == 0) fail(ErrorKind::DimensionMismatch, "embedding matrix has no rows");
  if (emb.token_offsets.size() != emb.rows()) {
    fail(ErrorKind::DimensionMismatch, "token_offsets size differs from embedding rows");
  }
  if (!emb.embeddings.allFinite()) fail(ErrorKind::DimensionMismatch, "embedding has non-finite entries");
  for (std::size_t k = 0; k < emb.rows(); ++k) {
    const auto [s, e] = emb.token_offsets[k];
    if (s > e || e > text_size) fail(ErrorKind::SpanError, "token offset outside the document");
    if (k > 0 && s < emb.token_offsets[k - 1].first) {
      fail(ErrorKind::SpanError, "token offsets are not non-decreasing");
    }
  }
}

std::vector<Token> mock_tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word(c)) {
      while (j < n && is_word(static_cast<unsigned char>(text[j]))) ++j;
    }
    tokens.push_back({std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return tokens;
}

TokenEmbeddingMatrix mock_embed(std::string_view text, int dim, std::uint64_t seed) {
  if (dim < 1) fail(ErrorKind::DimensionMismatch, "mock_embed: dim must be >= 1");
  const auto tokens = mock_tokenize(text);
  if (tokens.empty()) fail(ErrorKind::EmptyDocument, "mock_embed: document has no tokens");
  TokenEmbeddingMatrix out;
  out.embeddings.resize(static_cast<Eigen::Index>(tokens.size()), dim);
  out.token_offsets.reserve(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    Rng rng(mix64(hash_bytes(tokens[k].text, seed) ^ mix64(k + 1)));
    auto row = out.embeddings.row(static_cast<Eigen::Index>(k));
    double norm = 0.0;
    do {
      for (int j = 0; j < dim; ++j) row(j) = rng.normal();
      norm = row.norm();
    } while (norm == 0.0);
    row /= norm;
    out.token_offsets.emplace_back(tokens[k].start, tokens[k].end);
  }
  out.meta["encoder"] = "mock";
  return out;
}

SpanAlignment align_spans(const RstTree& tree, const TokenEmbeddingMatrix& emb, bool borrow_empty) {
  const std::size_t n_edus = tree.edus.size();
  const std::size_t n_tokens = emb.rows();
  if (n_tokens == 0) fail(ErrorKind::AlignmentGap, "no tokens to align");

  // EDU whose span contains `pos`, if any (EDUs are sorted and disjoint).
  auto containing = [&](std::size_t pos) -> std::optional<std::size_t> {
    auto it = std::upper_bound(tree.edus.begin(), tree.edus.end(), pos,
                               [](std::size_t p, const EduNode& e) { return p < e.span_start; });
    if (it == tree.edus.begin()) return std::nullopt;
    --it;
    if (pos < it->span_end) return static_cast<std::size_t>(it - tree.edus.begin());
    return std::nullopt;
  };

  SpanAlignment out;
  out.ranges.assign(n_edus, {-1, -1});
  out.borrowed.assign(n_edus, false);
  for (std::size_t k = 0; k < n_tokens; ++k) {
    const auto [ts, te] = emb.token_offsets[k];
    std::optional<std::size_t> owner = containing(ts);
    if (!owner) {
      // Token starts in a gap: give it to the first EDU it overlaps.
      for (std::size_t i = 0; i < n_edus; ++i) {
        if (tree.edus[i].span_start < te && ts < tree.edus[i].span_end) {
          owner = i;
          break;
        }
      }
    }
    if (!owner) continue;
    auto& r = out.ranges[*owner];
    if (r.first < 0) r.first = static_cast<int>(k);
    r.second = static_cast<int>(k);
  }

  for (std::size_t i = 0; i < n_edus; ++i) {
    if (out.ranges[i].first >= 0) continue;
    if (!borrow_empty) {
      fail(ErrorKind::AlignmentGap, "EDU " + std::to_string(tree.edus[i].id) + " covers no tokens");
    }
    // Nearest preceding token, else the first token after the span.
    int pick = -1;
    for (std::size_t k = 0; k < n_tokens; ++k) {
      if (emb.token_offsets[k].first < tree.edus[i].span_start) pick = static_cast<int>(k);
    }
    if (pick < 0) pick = 0;
    out.ranges[i] = {pick, pick};
    out.borrowed[i] = true;
  }
  return out;
}

std::vector<CharSpan> plan_chunks(std::size_t num_tokens, std::size_t window, std::size_t overlap) {
  if (window == 0) fail(ErrorKind::ContextOverflow, "encoder window must be positive");
  if (num_tokens <= window) return {{0, num_tokens}};
  if (overlap >= window) fail(ErrorKind::ContextOverflow, "window overlap must be smaller than the window");
  const std::size_t stride = window - overlap;
  std::vector<CharSpan> chunks;
  std::size_t start = 0;
  while (start + window < num_tokens) {
    chunks.emplace_back(start, start + window);
    start += stride;
  }
  chunks.emplace_back(num_tokens - window, num_tokens);
  return chunks;
}

std::size_t owning_chunk(std::size_t token, const std::vector<CharSpan>& chunks) {
  std::size_t best = chunks.size();
  std::size_t best_margin = 0;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const auto [a, b] = chunks[c];
    if (token < a || token >= b) continue;
    const std::size_t margin = std::min(token - a, b - 1 - token);
    if (best == chunks.size() || margin > best_margin) {
      best = c;
      best_margin = margin;
    }
  }
  if (best == chunks.size()) fail(ErrorKind::ContextOverflow, "token not covered by any window");
  return best;
}

Eigen::MatrixXd stitch_chunks(std::size_t num_tokens, const std::vector<CharSpan>& chunks,
                              const std::vector<Eigen::MatrixXd>& chunk_rows) {
  if (chunks.size() != chunk_rows.size() || chunks.empty()) {
    fail(ErrorKind::DimensionMismatch, "one row block per window is required");
  }
  const Eigen::Index dim = chunk_rows.front().cols();
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    if (chunk_rows[c].rows() != static_cast<Eigen::Index>(chunks[c].second - chunks[c].first) ||
        chunk_rows[c].cols() != dim) {
      fail(ErrorKind::DimensionMismatch, "window " + std::to_string(c) + " has the wrong shape");
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(num_tokens), dim);
  for (std::size_t k = 0; k < num_tokens; ++k) {
    const std::size_t c = owning_chunk(k, chunks);
    out.row(static_cast<Eigen::Index>(k)) =
        chunk_rows[c].row(static_cast<Eigen::Index>(k - chunks[c].first));
  }
  return out;
}

std::string MockEncoder::revision() const {
  return "seed" + std::to_string(seed_) + "-d" + std::to_string(dim_);
}

TokenEmbeddingMatrix MockEncoder::embed(std::string_view text) const {
  TokenEmbeddingMatrix full = mock_embed(text, dim_, seed_);
  if (window_ == 0 || full.rows() <= window_) return full;
  const auto chunks = plan_chunks(full.rows(), window_, overlap_);
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& [a, b] : chunks) {
    blocks.push_back(full.embeddings.middleRows(static_cast<Eigen::Index>(a),
                                                static_cast<Eigen::Index>(b - a)));
  }
  full.embeddings = stitch_chunks(full.rows(), chunks, blocks);
  full.meta["chunks"] = chunks.size();
  return full;
}

TokenEmbeddingMatrix ExternalEncoder::decode_response(const json& response, std::size_t text_size) const {
  if (!response.is_object() || !response.contains("offsets") || !response.contains("chunks")) {
    fail(ErrorKind::EncoderUnavailable, "encoder response lacks offsets/chunks");
  }
  TokenEmbeddingMatrix out;
  for (const auto& off : response.at("offsets")) {
    out.token_offsets.emplace_back(off.at(0).get<std::size_t>(), off.at(1).get<std::size_t>());
  }
  const std::size_t K = out.token_offsets.size();
  if (K == 0) fail(ErrorKind::EmptyDocument, "encoder produced no tokens");
  if (K > config_.window && !config_.allow_chunking) {
    fail(ErrorKind::ContextOverflow, std::to_string(K) + " tokens exceed the " +
                                         std::to_string(config_.window) + "-token window");
  }
  const auto plan = plan_chunks(K, config_.window, config_.overlap);
  const auto& chunks = response.at("chunks");
  if (chunks.size() != plan.size()) {
    fail(ErrorKind::EncoderUnavailable, "encoder returned " + std::to_string(chunks.size()) +
                                            " windows, expected " + std::to_string(plan.size()));
  }
  std::vector<Eigen::MatrixXd> blocks;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    const auto& chunk = chunks[c];
    if (chunk.at("start").get<std::size_t>() != plan[c].first) {
      fail(ErrorKind::EncoderUnavailable, "encoder window " + std::to_string(c) + " starts off-plan");
    }
    const auto& rows = chunk.at("embeddings");
    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), config_.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(config_.dim)) {
        fail(ErrorKind::DimensionMismatch, "encoder row width differs from configured dim");
      }
      for (int j = 0; j < config_.dim; ++j) block(static_cast<Eigen::Index>(r), j) = rows[r][j].get<double>();
    }
    blocks.push_back(std::move(block));
  }
  out.embeddings = stitch_chunks(K, plan, blocks);
  out.meta["encoder"] = config_.name;
  out.meta["revision"] = config_.revision;
  out.meta["chunks"] = plan.size();
  if (response.contains("offsets_approximate")) out.meta["offsets_approximate"] = response["offsets_approximate"];
  validate_embeddings(out, text_size);
  return out;
}

TokenEmbeddingMatrix ExternalEncoder::embed(std::string_view text) const {
  if (config_.command.empty()) fail(ErrorKind::EncoderUnavailable, "no encoder command configured");
  std::string tmpl = (fs::temp_directory_path() / "race-encode-XXXXXX").string();
  std::vector<char> name(tmpl.begin(), tmpl.end());
  name.push_back('\0');
  const int fd = mkstemp(name.data());
  if (fd < 0) fail(ErrorKind::IoError, "cannot create a temporary file for the encoder");
  const std::string input_path(name.data());
  {
    const ssize_t written = ::write(fd, text.data(), text.size());
    ::close(fd);
    if (written != static_cast<ssize_t>(text.size())) {
      fs::remove(input_path);
      fail(ErrorKind::IoError, "cannot write encoder input");
    }
  }
  const std::string cmd = config_.command + " --window " + std::to_string(config_.window) +
                          " --overlap " + std::to_string(config_.overlap) + " < '" + input_path + "'";
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove(input_path);
    fail(ErrorKind::EncoderUnavailable, "cannot start encoder: " + config_.command);
  }
  std::array<char, 1 << 16> buf{};
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), got);
  const int status = pclose(pipe);
  fs::remove(input_path);
  if (status != 0) {
    fail(ErrorKind::EncoderUnavailable, "encoder command exited with status " + std::to_string(status));
  }
  json response;
  try {
    response = json::parse(output);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::EncoderUnavailable, std::string("encoder output is not JSON: ") + e.what());
  }
  return decode_response(response, text.size());
}

std::string sanitize_key(std::string_view key) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : key) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  if (out.empty() || out == "." || out == "..") out = "%" + out;
  return out;
}

void write_embedding_blob(const std::string& path, const TokenEmbeddingMatrix& emb) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp);
    out.write(kBlobMagic, sizeof(kBlobMagic));
    put<std::uint64_t>(out, emb.rows());
    put<std::uint64_t>(out, static_cast<std::uint64_t>(emb.dim()));
    for (const auto& [s, e] : emb.token_offsets) {
      put<std::uint64_t>(out, s);
      put<std::uint64_t>(out, e);
    }
    for (Eigen::Index r = 0; r < emb.embeddings.rows(); ++r) {
      for (Eigen::Index c = 0; c < emb.embeddings.cols(); ++c) put<double>(out, emb.embeddings(r, c));
    }
    const std::string meta = emb.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

TokenEmbeddingMatrix read_embedding_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::DataMissing, "cannot read " + path);
  char magic[sizeof(kBlobMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::SchemaError, path + " is not an embedding blob");
  }
  const auto rows = take<std::uint64_t>(in);
  const auto cols = take<std::uint64_t>(in);
  TokenEmbeddingMatrix emb;
  for (std::uint64_t k = 0; k < rows; ++k) {
    const auto s = take<std::uint64_t>(in);
    const auto e = take<std::uint64_t>(in);
    emb.token_offsets.emplace_back(s, e);
  }
  emb.embeddings.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < emb.embeddings.rows(); ++r) {
    for (Eigen::Index c = 0; c < emb.embeddings.cols(); ++c) emb.embeddings(r, c) = take<double>(in);
  }
  const auto meta_size = take<std::uint64_t>(in);
  std::string meta(meta_size, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_size));
  if (!in) fail(ErrorKind::IoError, "truncated embedding blob " + path);
  emb.meta = json::parse(meta);
  return emb;
}

std::string EmbeddingCache::path_for(std::string_view doc_id, const Encoder& encoder) const {
  return (fs::path(root_) / (sanitize_key(encoder.name()) + "@" + sanitize_key(encoder.revision())) /
          (sanitize_key(doc_id) + ".emb"))
      .string();
}

std::optional<TokenEmbeddingMatrix> EmbeddingCache::load(std::string_view doc_id,
                                                         const Encoder& encoder) const {
  const std::string path = path_for(doc_id, encoder);
  if (!fs::exists(path)) return std::nullopt;
  return read_embedding_blob(path);
}

void EmbeddingCache::store(std::string_view doc_id, const Encoder& encoder,
                           const TokenEmbeddingMatrix& emb) const {
  const std::string path = path_for(doc_id, encoder);
  fs::create_directories(fs::path(path).parent_path());
  write_embedding_blob(path, emb);
}

TokenEmbeddingMatrix EmbeddingCache::get_or_embed(std::string_view doc_id, std::string_view text,
                                                  const Encoder& encoder) const {
  if (auto hit = load(doc_id, encoder)) return *hit;
  TokenEmbeddingMatrix emb = encoder.embed(text);
  store(doc_id, encoder, emb);
  return emb;
}

}  // namespace race
