#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "race/common.hpp"
#include "race/dataset.hpp"

using namespace race;
using nlohmann::json;

using fixture::kind_of;

namespace {

Record rec(std::string id, Domain d, Label l, std::string group = "") {
  Record r;
  r.id = std::move(id);
  r.text = "text of " + r.id;
  r.domain = d;
  r.label = l;
  r.group_id = group.empty() ? r.id : std::move(group);
  return r;
}

// Cells sized like the resplit statistics table (rows summed over partitions).
std::vector<Record> table_scale_corpus() {
  const int sizes[4][4] = {
      {1000, 1000, 1755, 245}, {1000, 1000, 1744, 256}, {1000, 1000, 1758, 242}, {1000, 1000, 1728, 272}};
  std::vector<Record> out;
  for (int d = 0; d < 4; ++d)
    for (int l = 0; l < 4; ++l)
      for (int i = 0; i < sizes[d][l]; ++i)
        out.push_back(rec(std::to_string(d) + "/" + std::to_string(l) + "/" + std::to_string(i),
                          static_cast<Domain>(d), static_cast<Label>(l)));
  return out;
}

std::vector<Record> random_corpus(Rng& rng, std::size_t groups) {
  std::vector<Record> out;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto d = static_cast<Domain>(rng.uniform_index(4));
    const std::string base = "g" + std::to_string(g);
    const std::size_t members = 1 + rng.uniform_index(4);
    for (std::size_t m = 0; m < members; ++m) out.push_back(rec(base + "#" + std::to_string(m), d, static_cast<Label>(m), base));
  }
  return out;
}

void check_partitioned(const std::vector<Record>& corpus, const SplitAssignment& split) {
  CHECK(split.partition_of.size() == corpus.size());
  for (const auto& r : corpus) CHECK(split.partition_of.count(r.id) == 1);
}

}  // namespace

TEST_CASE("label mapping rules") {
  CHECK(map_hart_label("news/123", "human", "human") == Label::HumanWritten);
  CHECK(map_hart_label("rep/news/123", "human", "rephrase:gpt-4o") == Label::LLMPolished);
  CHECK(map_hart_label("hum/gen/news/123", "machine:gpt-4o", "humanize:human") == Label::Humanized);
  CHECK(map_hart_label("hum/gen/news/123", "machine:gpt-4o", "humanize:tool") == Label::Humanized);
  CHECK(map_hart_label("hum/gen/news/123", "machine:gpt-4o", "rewrite:llama") == Label::LLMGenerated);
  CHECK(map_hart_label("gen/news/123", "machine:gpt-4o", "") == Label::LLMGenerated);
  CHECK(kind_of([] { map_hart_label("gen/news/1", "human", ""); }) == ErrorKind::UnmappableRecord);
  CHECK(kind_of([] { map_hart_label("rep/news/1", "human", "translate"); }) == ErrorKind::UnmappableRecord);
}

TEST_CASE("group id and domain from ids") {
  CHECK(group_id_of("hum/gen/news/123") == "news/123");
  CHECK(group_id_of("gen/news/123") == "news/123");
  CHECK(group_id_of("rep/news/123") == "news/123");
  CHECK(group_id_of("news/123") == "news/123");
  CHECK(domain_from_id("rep/arxiv/9") == Domain::Arxiv);
  CHECK(domain_from_id("Writing/9") == Domain::Writing);
  CHECK_FALSE(domain_from_id("12345").has_value());
  CHECK(parse_domain("ESSAY") == Domain::Essay);
  CHECK(kind_of([] { parse_domain("poetry"); }) == ErrorKind::UnknownDomain);
  CHECK(parse_label("Human-Written") == Label::HumanWritten);
  CHECK(parse_label("LLMPolished") == Label::LLMPolished);
}

TEST_CASE("build_corpus labels, groups and exclusions") {
  const std::vector<json> raw = {
      {{"id", "news/1"}, {"text", "a"}, {"content_source", "human"}, {"language_source", "human"}},
      {{"id", "gen/news/1"}, {"text", "b"}, {"content_source", "machine:gpt-4o"}, {"language_source", ""}},
      {{"id", "rep/news/1"}, {"text", "c"}, {"content_source", "human"}, {"language_source", "rephrase:gpt-4o"}},
      {{"id", "hum/gen/news/1"}, {"text", "d"}, {"content_source", "machine:gpt-4o"}, {"language_source", "humanize:human"}},
      {{"id", "gen/news/2"}, {"text", "e"}, {"content_source", "human"}, {"language_source", ""}},
      {{"id", "42"}, {"text", "f"}, {"content_source", "human"}, {"language_source", "human"}},
  };
  const Corpus c = build_corpus(raw);
  REQUIRE(c.records.size() == 4);
  for (const auto& r : c.records) {
    CHECK(r.group_id == "news/1");
    CHECK(r.domain == Domain::News);
  }
  CHECK(c.excluded.size() == 2);

  const Corpus with_fallback = build_corpus(raw, Domain::Essay);
  CHECK(with_fallback.records.size() == 5);
}

TEST_CASE("apportion stays within one of the ideal share") {
  CHECK(apportion(10, {0.7, 0.2, 0.1}) == std::vector<std::size_t>{7, 2, 1});
  CHECK(apportion(1000, {0.7, 0.1, 0.2}) == std::vector<std::size_t>{700, 100, 200});
  CHECK(apportion(0, {0.7, 0.2, 0.1}) == std::vector<std::size_t>{0, 0, 0});
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng.uniform_index(5000);
    std::vector<double> w(1 + rng.uniform_index(5));
    for (double& x : w) x = 0.01 + rng.uniform01();
    const auto got = apportion(n, w);
    double wsum = 0;
    for (double x : w) wsum += x;
    std::size_t total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(std::abs(static_cast<double>(got[i]) - n * w[i] / wsum) < 1.0 + 1e-9);
      total += got[i];
    }
    CHECK(total == n);
  }
}

TEST_CASE("stratified split: single cell of 10") {
  std::vector<Record> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(rec("news/" + std::to_string(i), Domain::News, Label::HumanWritten));
  const SplitAssignment s = stratified_split(corpus, {}, 1);
  check_partitioned(corpus, s);
  CHECK(s.count(Partition::Train) == 7);
  CHECK(s.count(Partition::Val) == 2);
  CHECK(s.count(Partition::Test) == 1);
  CHECK(s.warnings.size() == 15);  // every other cell is empty
}

TEST_CASE("stratified split at the scale of the resplit table") {
  const auto corpus = table_scale_corpus();
  const SplitAssignment s = stratified_split(corpus, {0.7, 0.1, 0.2}, 42);
  check_partitioned(corpus, s);
  const SplitStats st = split_stats(corpus, s);
  CHECK(st.total(Partition::Train) == 11200);
  CHECK(st.total(Partition::Val) == 1600);
  CHECK(st.total(Partition::Test) == 3200);
  CHECK(st.cell(Domain::Arxiv, Label::HumanWritten, Partition::Train) == 700);
  CHECK(st.cell(Domain::Arxiv, Label::HumanWritten, Partition::Val) == 100);
  CHECK(st.cell(Domain::Arxiv, Label::HumanWritten, Partition::Test) == 200);
  const double w[3] = {0.7, 0.1, 0.2};
  for (int d = 0; d < 4; ++d)
    for (int l = 0; l < 4; ++l) {
      std::size_t n = 0;
      for (int p = 0; p < 3; ++p) n += st.cell(static_cast<Domain>(d), static_cast<Label>(l), static_cast<Partition>(p));
      for (int p = 0; p < 3; ++p) {
        const double got = static_cast<double>(st.cell(static_cast<Domain>(d), static_cast<Label>(l), static_cast<Partition>(p)));
        CHECK(std::abs(got - n * w[p]) <= 1.0 + 1e-9);
      }
    }
  CHECK(format_split_stats(st).find("Arxiv") != std::string::npos);
  CHECK(split_stats_json(st).is_object());
}

TEST_CASE("stratified split properties over random corpora") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto corpus = random_corpus(rng, 1 + rng.uniform_index(120));
    const std::uint64_t seed = rng.next_u64();
    const SplitAssignment a = stratified_split(corpus, {}, seed);
    check_partitioned(corpus, a);
    CHECK(stratified_split(corpus, {}, seed).partition_of == a.partition_of);
    const SplitStats st = split_stats(corpus, a);
    const double w[3] = {0.7, 0.2, 0.1};
    for (int d = 0; d < 4; ++d)
      for (int l = 0; l < 4; ++l) {
        std::size_t n = 0;
        for (int p = 0; p < 3; ++p) n += st.cell(static_cast<Domain>(d), static_cast<Label>(l), static_cast<Partition>(p));
        for (int p = 0; p < 3; ++p) {
          const double got = static_cast<double>(st.cell(static_cast<Domain>(d), static_cast<Label>(l), static_cast<Partition>(p)));
          CHECK(std::abs(got - n * w[p]) <= 1.0 + 1e-9);
        }
      }
  }
}

TEST_CASE("group-aware split keeps groups together") {
  std::vector<Record> corpus;
  for (int g = 0; g < 100; ++g) {
    const std::string base = "news/" + std::to_string(g);
    corpus.push_back(rec(base, Domain::News, Label::HumanWritten, base));
    corpus.push_back(rec("gen/" + base, Domain::News, Label::LLMGenerated, base));
    corpus.push_back(rec("rep/" + base, Domain::News, Label::LLMPolished, base));
    corpus.push_back(rec("hum/gen/" + base, Domain::News, Label::Humanized, base));
  }
  const SplitAssignment s = group_aware_split(corpus, {}, 9);
  check_partitioned(corpus, s);
  std::map<std::string, std::set<Partition>> seen;
  for (const auto& r : corpus) seen[r.group_id].insert(s.partition_of.at(r.id));
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& [g, parts] : seen) {
    CHECK(parts.size() == 1);
    counts[static_cast<int>(*parts.begin())] += 1;
  }
  CHECK(counts[0] == 70);
  CHECK(counts[1] == 20);
  CHECK(counts[2] == 10);

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rc = random_corpus(rng, 1 + rng.uniform_index(80));
    const SplitAssignment a = group_aware_split(rc, {}, trial);
    check_partitioned(rc, a);
    std::map<std::string, std::set<Partition>> groups;
    for (const auto& r : rc) groups[r.group_id].insert(a.partition_of.at(r.id));
    for (const auto& [g, parts] : groups) CHECK(parts.size() == 1);
    CHECK(group_aware_split(rc, {}, trial).partition_of == a.partition_of);
  }
}

TEST_CASE("leave one domain out") {
  const auto corpus = table_scale_corpus();
  const SplitAssignment s = leave_one_domain_out(corpus, Domain::Arxiv, 5);
  check_partitioned(corpus, s);
  std::size_t arxiv_test = 0;
  for (const auto& r : corpus) {
    const Partition p = s.partition_of.at(r.id);
    if (r.domain == Domain::Arxiv) {
      CHECK(p == Partition::Test);
      ++arxiv_test;
    } else {
      CHECK(p != Partition::Test);
    }
  }
  CHECK(arxiv_test == 4000);
  CHECK(s.count(Partition::Test) == 4000);
  CHECK(s.count(Partition::Train) == 10800);
  CHECK(s.count(Partition::Val) == 1200);

  const SplitAssignment news = leave_one_domain_out(corpus, Domain::News, 5);
  for (const auto& r : corpus) {
    if (r.domain == Domain::News) CHECK(news.partition_of.at(r.id) == Partition::Test);
  }
}

TEST_CASE("records and manifests round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "race_test_dataset";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<Record> corpus;
  for (int i = 0; i < 12; ++i) {
    Record r = rec("essay/" + std::to_string(i), Domain::Essay, static_cast<Label>(i % 4));
    r.text = "Line with \"quotes\" and unicode \xc3\xa9 " + std::to_string(i);
    r.content_source = "human";
    r.language_source = "rephrase:gpt-4o";
    corpus.push_back(r);
  }
  const std::string rpath = (dir / "corpus.jsonl").string();
  write_records_jsonl(rpath, corpus);
  const auto back = read_records_jsonl(rpath);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(record_to_json(back[i]) == record_to_json(corpus[i]));
  }

  const SplitAssignment s = stratified_split(corpus, {}, 2);
  std::vector<std::string> paths;
  for (Partition p : {Partition::Train, Partition::Val, Partition::Test}) {
    paths.push_back((dir / ("manifest_" + std::string(partition_name(p)) + ".jsonl")).string());
    write_manifest(paths.back(), corpus, s, p);
  }
  CHECK(read_manifests(paths).partition_of == s.partition_of);
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_hart reads a directory and uses file names for domains") {
  const auto dir = std::filesystem::temp_directory_path() / "race_test_hart";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "writing.test.jsonl");
    f << json{{"id", "7"}, {"text", "x"}, {"content_source", "human"}, {"language_source", "human"}}.dump() << "\n";
    f << json{{"id", "rep/7"}, {"text", "y"}, {"content_source", "human"}, {"language_source", "rephrase:gpt-4o"}}.dump() << "\n";
  }
  {
    std::ofstream f(dir / "mixed.json");
    f << json::array({json{{"id", "arxiv/1"}, {"text", "z"}, {"content_source", "human"}, {"language_source", "human"}}}).dump();
  }
  const Corpus c = load_hart(dir.string());
  REQUIRE(c.records.size() == 3);
  std::map<std::string, Record> by_id;
  for (const auto& r : c.records) by_id[r.id] = r;
  CHECK(by_id.at("7").domain == Domain::Writing);
  CHECK(by_id.at("rep/7").label == Label::LLMPolished);
  CHECK(by_id.at("rep/7").group_id == "7");
  CHECK(by_id.at("arxiv/1").domain == Domain::Arxiv);
  std::filesystem::remove_all(dir);
  CHECK(kind_of([&] { load_hart((dir / "missing").string()); }) == ErrorKind::DataMissing);
}
