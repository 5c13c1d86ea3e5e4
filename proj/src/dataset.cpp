#include "race/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "race/common.hpp"

namespace race {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumDomains> kDomainNames = {"Arxiv", "Essay", "News",
                                                                    "Writing"};
constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "HumanWritten", "LLMPolished", "LLMGenerated", "Humanized"};
constexpr std::array<std::string_view, kNumClasses> kLabelDisplay = {
    "Human-Written", "LLM-Polished", "LLM-Generated", "Humanized"};
constexpr std::array<std::string_view, 3> kPartitionNames = {"train", "val", "test"};

constexpr double kRoundingSlack = 1e-9;

// Remainders closer than the slack compare equal, so ties resolve by position
// instead of by floating-point noise.
long long quantize(double fraction) { return std::llround(fraction / kRoundingSlack); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

// "verb:model" -> (verb, model); nullopt when there is no colon.
std::optional<std::pair<std::string_view, std::string_view>> split_tag(std::string_view tag) {
  auto pos = tag.find(':');
  if (pos == std::string_view::npos) return std::nullopt;
  return std::make_pair(tag.substr(0, pos), tag.substr(pos + 1));
}

bool is_model_reviser(std::string_view tag) {
  static const std::set<std::string_view> kVerbs = {"humanize", "rewrite", "rephrase",
                                                    "polish", "paraphrase", "revise"};
  auto parts = split_tag(tag);
  if (!parts) return false;
  const auto [verb, who] = *parts;
  return kVerbs.count(verb) && !who.empty() && who != "human" && who != "tool";
}

// Small Edmonds-Karp max-flow, enough for the apportionment tables below.
class FlowNetwork {
 public:
  explicit FlowNetwork(std::size_t n) : cap_(n, std::vector<long long>(n, 0)) {}

  void add(std::size_t u, std::size_t v, long long c) { cap_[u][v] += c; }
  long long residual(std::size_t u, std::size_t v) const { return cap_[u][v]; }

  long long max_flow(std::size_t s, std::size_t t) {
    long long total = 0;
    const std::size_t n = cap_.size();
    while (true) {
      std::vector<std::ptrdiff_t> prev(n, -1);
      prev[s] = static_cast<std::ptrdiff_t>(s);
      std::vector<std::size_t> queue{s};
      for (std::size_t head = 0; head < queue.size() && prev[t] < 0; ++head) {
        const std::size_t u = queue[head];
        for (std::size_t v = 0; v < n; ++v) {
          if (prev[v] < 0 && cap_[u][v] > 0) {
            prev[v] = static_cast<std::ptrdiff_t>(u);
            queue.push_back(v);
          }
        }
      }
      if (prev[t] < 0) return total;
      long long push = std::numeric_limits<long long>::max();
      for (std::size_t v = t; v != s; v = static_cast<std::size_t>(prev[v])) {
        push = std::min(push, cap_[static_cast<std::size_t>(prev[v])][v]);
      }
      for (std::size_t v = t; v != s; v = static_cast<std::size_t>(prev[v])) {
        const auto u = static_cast<std::size_t>(prev[v]);
        cap_[u][v] -= push;
        cap_[v][u] += push;
      }
      total += push;
    }
  }

 private:
  std::vector<std::vector<long long>> cap_;
};

// Rounds the table rows[i] * weights / sum(weights) so that every row sums to
// its size, every column sums to the largest-remainder share of the grand
// total, and every cell is the floor or ceiling of its ideal value.
std::vector<std::vector<std::size_t>> apportion_table(const std::vector<std::size_t>& rows,
                                                      const std::vector<double>& weights) {
  const std::size_t R = rows.size();
  const std::size_t P = weights.size();
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const std::size_t grand = std::accumulate(rows.begin(), rows.end(), std::size_t{0});
  const auto targets = apportion(grand, weights);

  std::vector<std::vector<std::size_t>> out(R, std::vector<std::size_t>(P, 0));
  std::vector<std::vector<double>> frac(R, std::vector<double>(P, 0.0));
  std::vector<long long> row_need(R, 0);
  std::vector<long long> col_need(P, 0);
  for (std::size_t p = 0; p < P; ++p) col_need[p] = static_cast<long long>(targets[p]);
  for (std::size_t r = 0; r < R; ++r) {
    long long assigned = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const double ideal = static_cast<double>(rows[r]) * weights[p] / wsum;
      const double base = std::floor(ideal + kRoundingSlack);
      out[r][p] = static_cast<std::size_t>(base);
      frac[r][p] = std::max(0.0, ideal - base);
      assigned += static_cast<long long>(base);
      col_need[p] -= static_cast<long long>(base);
    }
    row_need[r] = static_cast<long long>(rows[r]) - assigned;
  }

  // source = 0, rows 1..R, columns R+1..R+P, sink R+P+1.
  auto solve = [&](bool fractional_only) -> std::optional<std::vector<std::vector<std::size_t>>> {
    const std::size_t sink = R + P + 1;
    FlowNetwork net(R + P + 2);
    long long need = 0;
    for (std::size_t r = 0; r < R; ++r) {
      net.add(0, 1 + r, row_need[r]);
      need += row_need[r];
    }
    for (std::size_t p = 0; p < P; ++p) net.add(1 + R + p, sink, std::max(0LL, col_need[p]));
    // Greedy pre-assignment by descending remainder, then augmenting paths fix
    // whatever the greedy pass could not place.
    std::vector<std::tuple<double, std::size_t, std::size_t>> order;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t p = 0; p < P; ++p) {
        if (!fractional_only || frac[r][p] > kRoundingSlack) order.emplace_back(frac[r][p], r, p);
      }
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return quantize(std::get<0>(a)) > quantize(std::get<0>(b));
    });
    for (const auto& [f, r, p] : order) net.add(1 + r, 1 + R + p, 1);
    long long flow = 0;
    for (const auto& [f, r, p] : order) {
      if (net.residual(0, 1 + r) > 0 && net.residual(1 + R + p, sink) > 0 &&
          net.residual(1 + r, 1 + R + p) > 0) {
        net.add(0, 1 + r, -1);
        net.add(1 + r, 0, 1);
        net.add(1 + r, 1 + R + p, -1);
        net.add(1 + R + p, 1 + r, 1);
        net.add(1 + R + p, sink, -1);
        net.add(sink, 1 + R + p, 1);
        ++flow;
      }
    }
    flow += net.max_flow(0, sink);
    if (flow != need) return std::nullopt;
    auto result = out;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t p = 0; p < P; ++p) {
        // Flow on a unit edge shows up as reverse residual capacity.
        if (net.residual(1 + R + p, 1 + r) > 0) result[r][p] += 1;
      }
    }
    return result;
  };

  if (auto solved = solve(true)) return *solved;
  if (auto solved = solve(false)) return *solved;
  // Unreachable for valid inputs; fall back to independent per-row rounding.
  for (std::size_t r = 0; r < R; ++r) {
    std::vector<double> w(weights);
    out[r] = apportion(rows[r], w);
  }
  return out;
}

void assign_cells(const std::vector<std::vector<std::string>>& cells, const std::vector<double>& weights,
                  const std::vector<Partition>& parts, Rng& rng,
                  std::map<std::string, Partition>& partition_of) {
  std::vector<std::size_t> sizes;
  for (const auto& c : cells) sizes.push_back(c.size());
  const auto table = apportion_table(sizes, weights);
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::vector<std::string> keys = cells[r];
    rng.shuffle(keys);
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      for (std::size_t k = 0; k < table[r][p]; ++k) partition_of[keys[cursor++]] = parts[p];
    }
  }
}

std::size_t cell_index(Domain d, Label l) {
  return static_cast<std::size_t>(d) * kNumClasses + static_cast<std::size_t>(l);
}

std::string get_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

}  // namespace

std::string_view domain_name(Domain d) { return kDomainNames.at(static_cast<std::size_t>(d)); }
std::string_view label_name(Label l) { return kLabelNames.at(static_cast<std::size_t>(l)); }
std::string_view partition_name(Partition p) {
  return kPartitionNames.at(static_cast<std::size_t>(p));
}

Domain parse_domain(std::string_view name) {
  const std::string l = lower(name);
  for (std::size_t i = 0; i < kNumDomains; ++i) {
    if (lower(kDomainNames[i]) == l) return static_cast<Domain>(i);
  }
  fail(ErrorKind::UnknownDomain, "unknown domain '" + std::string(name) + "'");
}

Label parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kLabelNames[i] == name || kLabelDisplay[i] == name) return static_cast<Label>(i);
  }
  fail(ErrorKind::SchemaError, "unknown label '" + std::string(name) + "'");
}

Partition parse_partition(std::string_view name) {
  for (std::size_t i = 0; i < kPartitionNames.size(); ++i) {
    if (kPartitionNames[i] == name) return static_cast<Partition>(i);
  }
  fail(ErrorKind::SchemaError, "unknown partition '" + std::string(name) + "'");
}

Label map_hart_label(std::string_view id, std::string_view content_source,
                     std::string_view language_source) {
  const std::string rid(id);
  if (starts_with(id, "hum/gen/")) {
    if (language_source == "humanize:human" || language_source == "humanize:tool") {
      return Label::Humanized;
    }
    if (is_model_reviser(language_source)) return Label::LLMGenerated;
    fail(ErrorKind::UnmappableRecord,
         rid + ": hum/gen/ record with unrecognized language_source '" + std::string(language_source) + "'");
  }
  if (starts_with(id, "rep/")) {
    auto parts = split_tag(language_source);
    if (parts && parts->first == "rephrase" && !parts->second.empty()) return Label::LLMPolished;
    fail(ErrorKind::UnmappableRecord,
         rid + ": rep/ record without a rephrase: language_source");
  }
  if (starts_with(id, "gen/")) {
    auto parts = split_tag(content_source);
    if (parts && parts->first == "machine" && !parts->second.empty()) return Label::LLMGenerated;
    fail(ErrorKind::UnmappableRecord, rid + ": gen/ record without a machine: content_source");
  }
  if (starts_with(id, "hum/")) {
    fail(ErrorKind::UnmappableRecord, rid + ": hum/ prefix without gen/");
  }
  return Label::HumanWritten;
}

std::string group_id_of(std::string_view id) {
  for (std::string_view prefix : {"hum/gen/", "rep/", "gen/"}) {
    if (starts_with(id, prefix)) return std::string(id.substr(prefix.size()));
  }
  return std::string(id);
}

std::optional<Domain> domain_from_id(std::string_view id) {
  const std::string base = group_id_of(id);
  const auto slash = base.find('/');
  if (slash == std::string::npos) return std::nullopt;
  try {
    return parse_domain(std::string_view(base).substr(0, slash));
  } catch (const Error&) {
    return std::nullopt;
  }
}

Corpus build_corpus(const std::vector<json>& raw, std::optional<Domain> fallback_domain) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  for (const auto& j : raw) {
    const std::string id = get_string(j, "id");
    if (id.empty()) {
      corpus.excluded.push_back({"<missing id>", "record has no id"});
      continue;
    }
    if (!seen.insert(id).second) {
      corpus.excluded.push_back({id, "duplicate id"});
      continue;
    }
    Record r;
    r.id = id;
    r.text = get_string(j, "text");
    r.content_source = get_string(j, "content_source");
    r.language_source = get_string(j, "language_source");
    r.group_id = group_id_of(id);
    if (r.text.empty()) {
      corpus.excluded.push_back({id, "empty text"});
      continue;
    }
    try {
      r.label = map_hart_label(r.id, r.content_source, r.language_source);
      std::optional<Domain> domain;
      const std::string domain_field = get_string(j, "domain");
      if (!domain_field.empty()) domain = parse_domain(domain_field);
      if (!domain) domain = domain_from_id(id);
      if (!domain) domain = fallback_domain;
      if (!domain) fail(ErrorKind::UnknownDomain, id + ": no domain");
      r.domain = *domain;
    } catch (const Error& e) {
      corpus.excluded.push_back({id, std::string(error_kind_name(e.kind())) + ": " + e.what()});
      continue;
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

Corpus load_hart(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) files.push_back(entry.path());
    }
  } else if (fs::is_regular_file(path)) {
    files.emplace_back(path);
  } else {
    fail(ErrorKind::DataMissing, "HART path not found: " + path);
  }
  std::sort(files.begin(), files.end());

  Corpus all;
  std::vector<json> raw_all;
  std::vector<std::optional<Domain>> raw_domain;
  for (const auto& file : files) {
    std::optional<Domain> file_domain;
    const std::string stem = lower(file.filename().string());
    for (std::size_t d = 0; d < kNumDomains; ++d) {
      if (stem.find(lower(kDomainNames[d])) != std::string::npos) file_domain = static_cast<Domain>(d);
    }
    std::ifstream in(file);
    if (!in) fail(ErrorKind::IoError, "cannot read " + file.string());
    std::vector<json> items;
    if (file.extension() == ".jsonl") {
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) items.push_back(json::parse(line));
      }
    } else {
      json doc = json::parse(in);
      if (doc.is_object()) {
        for (const char* key : {"data", "records", "items"}) {
          if (doc.contains(key) && doc[key].is_array()) {
            doc = doc[key];
            break;
          }
        }
      }
      if (doc.is_array()) {
        for (auto& item : doc) items.push_back(std::move(item));
      } else {
        items.push_back(std::move(doc));
      }
    }
    for (auto& item : items) {
      raw_all.push_back(std::move(item));
      raw_domain.push_back(file_domain);
    }
  }
  // Domain fallback is per file, so build record by record.
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < raw_all.size(); ++i) {
    Corpus one = build_corpus({raw_all[i]}, raw_domain[i]);
    for (auto& r : one.records) {
      if (!seen.insert(r.id).second) {
        all.excluded.push_back({r.id, "duplicate id"});
        continue;
      }
      all.records.push_back(std::move(r));
    }
    for (auto& e : one.excluded) all.excluded.push_back(std::move(e));
  }
  return all;
}

std::size_t SplitAssignment::count(Partition p) const {
  return static_cast<std::size_t>(std::count_if(
      partition_of.begin(), partition_of.end(), [p](const auto& kv) { return kv.second == p; }));
}

std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(wsum > 0.0)) throw std::invalid_argument("apportion: weights must sum > 0");
  std::vector<std::size_t> out(weights.size());
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double ideal = static_cast<double>(n) * weights[i] / wsum;
    const double base = std::floor(ideal + kRoundingSlack);
    out[i] = static_cast<std::size_t>(base);
    frac[i] = ideal - base;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quantize(frac[a]) > quantize(frac[b]);
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) out[order[k % order.size()]] += 1;
  return out;
}

SplitAssignment stratified_split(const std::vector<Record>& corpus, SplitRatios ratios,
                                 std::uint64_t seed) {
  std::vector<std::vector<std::string>> cells(kNumDomains * kNumClasses);
  for (const auto& r : corpus) cells[cell_index(r.domain, r.label)].push_back(r.id);
  SplitAssignment split;
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    for (std::size_t l = 0; l < kNumClasses; ++l) {
      auto& cell = cells[d * kNumClasses + l];
      std::sort(cell.begin(), cell.end());
      if (cell.empty()) {
        split.warnings.push_back("EmptyCell: " + std::string(kDomainNames[d]) + "/" +
                                 std::string(kLabelNames[l]) + " has no records");
      }
    }
  }
  Rng rng(seed);
  assign_cells(cells, {ratios.train, ratios.val, ratios.test},
               {Partition::Train, Partition::Val, Partition::Test}, rng, split.partition_of);
  return split;
}

SplitAssignment group_aware_split(const std::vector<Record>& corpus, SplitRatios ratios,
                                  std::uint64_t seed) {
  // A group's domain is that of its lexicographically first member.
  std::map<std::string, std::vector<const Record*>> groups;
  for (const auto& r : corpus) groups[r.group_id].push_back(&r);
  std::vector<std::vector<std::string>> cells(kNumDomains);
  for (auto& [gid, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const Record* a, const Record* b) { return a->id < b->id; });
    cells[static_cast<std::size_t>(members.front()->domain)].push_back(gid);
  }
  SplitAssignment split;
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    if (cells[d].empty()) {
      split.warnings.push_back("EmptyCell: " + std::string(kDomainNames[d]) + " has no groups");
    }
  }
  Rng rng(seed);
  std::map<std::string, Partition> group_partition;
  assign_cells(cells, {ratios.train, ratios.val, ratios.test},
               {Partition::Train, Partition::Val, Partition::Test}, rng, group_partition);
  for (const auto& r : corpus) split.partition_of[r.id] = group_partition.at(r.group_id);
  return split;
}

SplitAssignment leave_one_domain_out(const std::vector<Record>& corpus, Domain held_out,
                                     std::uint64_t seed, double train_fraction) {
  SplitAssignment split;
  std::vector<std::vector<std::string>> cells(kNumDomains * kNumClasses);
  for (const auto& r : corpus) {
    if (r.domain == held_out) {
      split.partition_of[r.id] = Partition::Test;
    } else {
      cells[cell_index(r.domain, r.label)].push_back(r.id);
    }
  }
  for (auto& cell : cells) std::sort(cell.begin(), cell.end());
  Rng rng(seed);
  assign_cells(cells, {train_fraction, 1.0 - train_fraction}, {Partition::Train, Partition::Val},
               rng, split.partition_of);
  return split;
}

std::size_t SplitStats::total(Partition p) const {
  std::size_t sum = 0;
  for (const auto& d : cells) {
    for (const auto& l : d) sum += l[static_cast<std::size_t>(p)];
  }
  return sum;
}

SplitStats split_stats(const std::vector<Record>& corpus, const SplitAssignment& split) {
  SplitStats stats;
  for (const auto& r : corpus) {
    auto it = split.partition_of.find(r.id);
    if (it == split.partition_of.end()) continue;
    stats.cells[static_cast<std::size_t>(r.domain)][static_cast<std::size_t>(r.label)]
               [static_cast<std::size_t>(it->second)] += 1;
  }
  return stats;
}

std::string format_split_stats(const SplitStats& stats) {
  std::ostringstream os;
  os << std::left << std::setw(9) << "Domain" << std::setw(15) << "Category" << std::right
     << std::setw(8) << "Train" << std::setw(8) << "Val" << std::setw(8) << "Test" << std::setw(8)
     << "Total" << '\n';
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    for (std::size_t l = 0; l < kNumClasses; ++l) {
      const auto& c = stats.cells[d][l];
      os << std::left << std::setw(9) << (l == 0 ? kDomainNames[d] : "") << std::setw(15)
         << kLabelDisplay[l] << std::right << std::setw(8) << c[0] << std::setw(8) << c[1]
         << std::setw(8) << c[2] << std::setw(8) << (c[0] + c[1] + c[2]) << '\n';
    }
  }
  const std::size_t tr = stats.total(Partition::Train);
  const std::size_t va = stats.total(Partition::Val);
  const std::size_t te = stats.total(Partition::Test);
  os << std::left << std::setw(24) << "Total" << std::right << std::setw(8) << tr << std::setw(8)
     << va << std::setw(8) << te << std::setw(8) << (tr + va + te) << '\n';
  return os.str();
}

json split_stats_json(const SplitStats& stats) {
  json rows = json::array();
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    for (std::size_t l = 0; l < kNumClasses; ++l) {
      const auto& c = stats.cells[d][l];
      rows.push_back({{"domain", kDomainNames[d]},
                      {"category", kLabelDisplay[l]},
                      {"train", c[0]},
                      {"val", c[1]},
                      {"test", c[2]},
                      {"total", c[0] + c[1] + c[2]}});
    }
  }
  return {{"rows", rows},
          {"total",
           {{"train", stats.total(Partition::Train)},
            {"val", stats.total(Partition::Val)},
            {"test", stats.total(Partition::Test)}}}};
}

json record_to_json(const Record& r) {
  return {{"id", r.id},
          {"text", r.text},
          {"domain", domain_name(r.domain)},
          {"label", label_name(r.label)},
          {"group_id", r.group_id},
          {"content_source", r.content_source},
          {"language_source", r.language_source}};
}

Record record_from_json(const json& j) {
  Record r;
  r.id = get_string(j, "id");
  if (r.id.empty()) fail(ErrorKind::SchemaError, "record without id");
  r.text = get_string(j, "text");
  r.domain = parse_domain(get_string(j, "domain"));
  r.label = parse_label(get_string(j, "label"));
  r.group_id = get_string(j, "group_id");
  if (r.group_id.empty()) r.group_id = group_id_of(r.id);
  r.content_source = get_string(j, "content_source");
  r.language_source = get_string(j, "language_source");
  return r;
}

std::vector<Record> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::DataMissing, "cannot read records file " + path);
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaError, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records_jsonl(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_manifest(const std::string& path, const std::vector<Record>& corpus,
                    const SplitAssignment& split, Partition which) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  for (const auto& r : corpus) {
    auto it = split.partition_of.find(r.id);
    if (it == split.partition_of.end() || it->second != which) continue;
    out << json{{"id", r.id},
                {"label", label_name(r.label)},
                {"domain", domain_name(r.domain)},
                {"partition", partition_name(which)}}
               .dump()
        << '\n';
  }
}

SplitAssignment read_manifests(const std::vector<std::string>& paths) {
  SplitAssignment split;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::DataMissing, "cannot read manifest " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      split.partition_of[get_string(j, "id")] = parse_partition(get_string(j, "partition"));
    }
  }
  return split;
}

}  // namespace race
