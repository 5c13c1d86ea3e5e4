#include "race/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace race {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::UnknownRelation: return "UnknownRelation";
    case ErrorKind::SpanError: return "SpanError";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::UnmappableRecord: return "UnmappableRecord";
    case ErrorKind::UnknownDomain: return "UnknownDomain";
    case ErrorKind::EncoderUnavailable: return "EncoderUnavailable";
    case ErrorKind::ContextOverflow: return "ContextOverflow";
    case ErrorKind::AlignmentGap: return "AlignmentGap";
    case ErrorKind::InvalidTree: return "InvalidTree";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::DegenerateClass: return "DegenerateClass";
    case ErrorKind::DegenerateCluster: return "DegenerateCluster";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::NoPairs: return "NoPairs";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::DataMissing: return "DataMissing";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ParserFailure: return "ParserFailure";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

}  // namespace race
