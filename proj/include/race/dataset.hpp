#pragma once

// Four-class corpus reconstruction from HART-style records and the three
// split regimes (stratified, group-aware, leave-one-domain-out).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace race {

enum class Domain { Arxiv, Essay, News, Writing };
enum class Label { HumanWritten, LLMPolished, LLMGenerated, Humanized };
enum class Partition { Train, Val, Test };

inline constexpr std::size_t kNumDomains = 4;
inline constexpr std::size_t kNumClasses = 4;

std::string_view domain_name(Domain d);
std::string_view label_name(Label l);
std::string_view partition_name(Partition p);

/// Case-insensitive; accepts "arxiv" / "Arxiv" etc. Throws UnknownDomain.
Domain parse_domain(std::string_view name);
/// Accepts the canonical names ("HumanWritten") and the display names
/// ("Human-Written"). Throws SchemaError.
Label parse_label(std::string_view name);
Partition parse_partition(std::string_view name);

struct Record {
  std::string id;
  std::string text;
  Domain domain = Domain::News;
  Label label = Label::HumanWritten;
  std::string group_id;
  std::string content_source;
  std::string language_source;
};

/// Label rules, checked in order hum/gen/ > rep/ > gen/ > base.
///
///   hum/gen/  humanize:human | humanize:tool        -> Humanized
///             <verb>:<model> with a model reviser   -> LLMGenerated
///   rep/      rephrase:<model>                      -> LLMPolished
///   gen/      content_source machine:<model>        -> LLMGenerated
///   no derivative prefix                            -> HumanWritten
///
/// Anything else throws Error(UnmappableRecord).
Label map_hart_label(std::string_view id, std::string_view content_source,
                     std::string_view language_source);

/// Strips hum/gen/, rep/ or gen/ from the front of an id.
std::string group_id_of(std::string_view id);

/// Domain from the first path component of the base id ("news/123" -> News).
std::optional<Domain> domain_from_id(std::string_view id);

struct Exclusion {
  std::string id;
  std::string reason;
};

struct Corpus {
  std::vector<Record> records;
  std::vector<Exclusion> excluded;
};

/// Builds labeled records from raw HART-style JSON objects (fields id, text,
/// content_source, language_source, optional domain). `fallback_domain` is
/// used when neither the record nor its id names a domain.
Corpus build_corpus(const std::vector<nlohmann::json>& raw,
                    std::optional<Domain> fallback_domain = std::nullopt);

/// Reads every *.json / *.jsonl file under `path` (or the single file).
/// A file named after a domain (e.g. news.test.json) supplies the fallback
/// domain for its records.
Corpus load_hart(const std::string& path);

struct SplitRatios {
  double train = 0.70;
  double val = 0.20;
  double test = 0.10;
};

struct SplitAssignment {
  std::map<std::string, Partition> partition_of;
  std::vector<std::string> warnings;  // e.g. empty (domain, label) cells

  std::size_t count(Partition p) const;
};

/// Largest-remainder apportionment of n items over weights; ties go to the
/// earlier slot. Every share is within one item of n * weight / sum.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights);

/// Shuffles each (domain, label) cell and cuts it by `apportion`.
SplitAssignment stratified_split(const std::vector<Record>& corpus, SplitRatios ratios,
                                 std::uint64_t seed);

/// Assigns whole groups (shared group_id); stratified by the group's domain.
SplitAssignment group_aware_split(const std::vector<Record>& corpus, SplitRatios ratios,
                                  std::uint64_t seed);

/// Test = every record of the held-out domain; the rest is cut 90:10 into
/// train/val with the train total fixed by apportioning the whole remainder.
SplitAssignment leave_one_domain_out(const std::vector<Record>& corpus, Domain held_out,
                                     std::uint64_t seed, double train_fraction = 0.9);

/// Counts per (domain, label, partition), laid out like the dataset
/// statistics table.
struct SplitStats {
  std::array<std::array<std::array<std::size_t, 3>, kNumClasses>, kNumDomains> cells{};

  std::size_t total(Partition p) const;
  std::size_t cell(Domain d, Label l, Partition p) const {
    return cells[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)]
                [static_cast<std::size_t>(p)];
  }
};

SplitStats split_stats(const std::vector<Record>& corpus, const SplitAssignment& split);
std::string format_split_stats(const SplitStats& stats);
nlohmann::json split_stats_json(const SplitStats& stats);

nlohmann::json record_to_json(const Record& r);
Record record_from_json(const nlohmann::json& j);

std::vector<Record> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::string& path, const std::vector<Record>& records);

/// One manifest line per record: {"id", "label", "domain", "partition"}.
void write_manifest(const std::string& path, const std::vector<Record>& corpus,
                    const SplitAssignment& split, Partition which);
SplitAssignment read_manifests(const std::vector<std::string>& paths);

}  // namespace race
