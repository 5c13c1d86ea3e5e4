#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace race {

enum class ErrorKind {
  SchemaError,
  UnknownRelation,
  SpanError,
  EmptyDocument,
  UnmappableRecord,
  UnknownDomain,
  EncoderUnavailable,
  ContextOverflow,
  AlignmentGap,
  InvalidTree,
  UnknownNode,
  DimensionMismatch,
  BatchTooSmall,
  DegenerateClass,
  DegenerateCluster,
  EmptyClass,
  NoPairs,
  NonFiniteLoss,
  DataMissing,
  ConfigMismatch,
  SchemaMismatch,
  ParserFailure,
  IoError,
};

std::string_view error_kind_name(ErrorKind kind);

// All library failures carry a machine-readable kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

/// Seeded generator used for every shuffle, dropout mask and initializer.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions on top of it are implemented here rather than
/// with <random> distributions, whose outputs vary between standard libraries,
/// so a seed reproduces the same split and the same model on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a followed by a splitmix64 finalizer.
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed = 0);

std::uint64_t mix64(std::uint64_t x);

}  // namespace race
