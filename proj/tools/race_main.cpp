// race: command-line driver. Stages hand off through files so parsing and
// embedding can be cached and resumed.
//
//   race synth         --out DIR                          synthetic corpus + trees
//   race parse-cache   --input RAW --out TREES            discourse trees per document
//   race build-dataset --input RAW --run DIR              corpus, manifests, split stats
//   race train         --run DIR --trees TREES            one checkpoint per seed
//   race evaluate      --run DIR --trees TREES            report for a partition
//   race predict       --checkpoint CK --input DOCS       per-document probabilities
//   race analyze       --run DIR --trees TREES            Z profiles and similarity table

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "race/analysis.hpp"
#include "race/common.hpp"
#include "race/dataset.hpp"
#include "race/embedder.hpp"
#include "race/metrics.hpp"
#include "race/model.hpp"
#include "race/rst.hpp"
#include "race/synthetic.hpp"
#include "race/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace race;

namespace {

struct EncoderSettings {
  std::string mode = "mock";  // mock | real
  std::string command = "python3 tools/hf_encoder.py";
  std::string name = "roberta-base";
  std::string revision = "main";
  std::size_t window = 510;  // content tokens per window; the helper adds the two specials
  std::size_t overlap = 64;
  std::uint64_t mock_seed = 1234;
};

struct Settings {
  ModelConfig model;
  TrainConfig train;
  EncoderSettings encoder;
  SplitRatios ratios;
  bool borrow_empty = true;
  double fpr_cap = 0.01;
};

// Command-line overrides; unset values leave the file/default untouched.
struct Overrides {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string split;
  std::string encoder;
  std::string encoder_cmd;
  std::vector<double> ratios;
  double fpr_cap = -1.0;
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::SchemaError, path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

Settings resolve(const Overrides& o) {
  Settings s;
  if (!o.config_path.empty()) {
    const json j = read_json_file(o.config_path);
    if (j.contains("model")) s.model = ModelConfig::from_json(j["model"]);
    if (j.contains("train")) s.train = TrainConfig::from_json(j["train"]);
    if (j.contains("encoder")) {
      const json& e = j["encoder"];
      if (e.contains("mode")) s.train.encoder = e["mode"].get<std::string>();
      s.encoder.command = e.value("command", s.encoder.command);
      s.encoder.name = e.value("name", s.encoder.name);
      s.encoder.revision = e.value("revision", s.encoder.revision);
      s.encoder.window = e.value("window", s.encoder.window);
      s.encoder.overlap = e.value("overlap", s.encoder.overlap);
      s.encoder.mock_seed = e.value("mock_seed", s.encoder.mock_seed);
    }
    if (j.contains("ratios")) {
      const auto r = j["ratios"].get<std::vector<double>>();
      if (r.size() != 3) fail(ErrorKind::ConfigMismatch, "ratios needs three values");
      s.ratios = {r[0], r[1], r[2]};
    }
    s.borrow_empty = j.value("borrow_empty", s.borrow_empty);
    s.fpr_cap = j.value("fpr_cap", s.fpr_cap);
  }
  s.encoder.mode = s.train.encoder;
  if (!o.seeds.empty()) s.train.seeds = o.seeds;
  if (!o.split.empty()) s.train.split = o.split;
  if (!o.encoder.empty()) s.encoder.mode = s.train.encoder = o.encoder;
  if (!o.encoder_cmd.empty()) s.encoder.command = o.encoder_cmd;
  if (!o.ratios.empty()) {
    if (o.ratios.size() != 3) fail(ErrorKind::ConfigMismatch, "--ratios needs train,val,test");
    s.ratios = {o.ratios[0], o.ratios[1], o.ratios[2]};
  }
  if (o.fpr_cap > 0.0) s.fpr_cap = o.fpr_cap;
  if (o.epochs > 0) s.train.epochs = o.epochs;
  if (o.batch_size > 0) s.train.batch_size = o.batch_size;
  if (o.learning_rate > 0.0) s.train.learning_rate = o.learning_rate;
  s.train.selection_fpr = s.fpr_cap;
  s.model.validate();
  s.train.validate();
  return s;
}

json settings_json(const Settings& s) {
  return {{"model", s.model.to_json()},
          {"train", s.train.to_json()},
          {"encoder",
           {{"mode", s.encoder.mode},
            {"command", s.encoder.command},
            {"name", s.encoder.name},
            {"revision", s.encoder.revision},
            {"window", s.encoder.window},
            {"overlap", s.encoder.overlap},
            {"mock_seed", s.encoder.mock_seed}}},
          {"ratios", {s.ratios.train, s.ratios.val, s.ratios.test}},
          {"borrow_empty", s.borrow_empty},
          {"fpr_cap", s.fpr_cap}};
}

std::unique_ptr<Encoder> make_encoder(const EncoderSettings& e, int dim) {
  if (e.mode == "mock") return std::make_unique<MockEncoder>(dim, e.mock_seed, e.window, e.overlap);
  ExternalEncoderConfig c;
  c.command = e.command;
  c.name = e.name;
  c.revision = e.revision;
  c.dim = dim;
  c.window = e.window;
  c.overlap = e.overlap;
  return std::make_unique<ExternalEncoder>(c);
}

std::string cache_root(const fs::path& run_dir) {
  if (const char* env = std::getenv("RACE_CACHE_DIR"); env && *env) return env;
  return (run_dir / "cache").string();
}

std::string run_shell(const std::string& cmd, std::string_view input, int* status) {
  std::string tmpl = (fs::temp_directory_path() / "race-parse-XXXXXX").string();
  const int fd = mkstemp(tmpl.data());
  if (fd < 0) fail(ErrorKind::IoError, "cannot create a temporary file");
  const ssize_t written = ::write(fd, input.data(), input.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(input.size())) {
    fs::remove(tmpl);
    fail(ErrorKind::IoError, "cannot write parser input");
  }
  FILE* pipe = popen((cmd + " < '" + tmpl + "'").c_str(), "r");
  if (!pipe) {
    fs::remove(tmpl);
    fail(ErrorKind::ParserFailure, "cannot start " + cmd);
  }
  std::string out;
  std::array<char, 1 << 16> buf{};
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
  *status = pclose(pipe);
  fs::remove(tmpl);
  return out;
}

void log_event(const json& j) { std::cerr << j.dump() << '\n'; }

// ---------------------------------------------------------------- synth

int cmd_synth(const std::string& out_dir, std::size_t groups, std::uint64_t seed) {
  SyntheticOptions o;
  o.groups = groups;
  o.seed = seed;
  const SyntheticCorpus syn = generate_synthetic(o);
  fs::create_directories(out_dir);
  std::ostringstream raw, trees;
  for (const auto& r : syn.raw) {
    raw << r.dump() << '\n';
    trees << serialize_tree_line(syn.trees.at(r["id"].get<std::string>())) << '\n';
  }
  write_text(fs::path(out_dir) / "raw.jsonl", raw.str());
  write_text(fs::path(out_dir) / "trees.jsonl", trees.str());
  std::cout << json{{"documents", syn.raw.size()}, {"out", out_dir}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- parse-cache

int cmd_parse_cache(const std::string& input, const std::string& out, const std::string& parser_cmd,
                    bool fallback) {
  if (parser_cmd.empty() && !fallback) {
    fail(ErrorKind::ParserFailure, "no parser: pass --parser-cmd or --fallback");
  }
  const Corpus corpus = load_hart(input);
  std::set<std::string> cached;
  if (fs::exists(out)) {
    for (const auto& [id, tree] : read_trees_jsonl(out)) cached.insert(id);
  } else if (fs::path(out).has_parent_path()) {
    fs::create_directories(fs::path(out).parent_path());
  }
  std::size_t parsed = 0, used_fallback = 0, failed = 0, skipped = 0;
  for (const Record& r : corpus.records) {
    if (cached.count(r.id)) {
      ++skipped;
      continue;
    }
    std::optional<RstTree> tree;
    if (!parser_cmd.empty()) {
      try {
        int status = 0;
        const std::string output = run_shell(parser_cmd, r.text, &status);
        if (status != 0) fail(ErrorKind::ParserFailure, "parser exited with status " + std::to_string(status));
        json j;
        try {
          j = json::parse(output);
        } catch (const json::parse_error& e) {
          fail(ErrorKind::ParserFailure, std::string("parser output is not JSON: ") + e.what());
        }
        if (!j.contains("doc_id")) j["doc_id"] = r.id;
        if (!j.contains("text")) j["text"] = r.text;
        tree = load_tree(j);
        ++parsed;
      } catch (const Error& e) {
        log_event({{"event", "parse_failure"}, {"doc_id", r.id}, {"error", std::string(error_kind_name(e.kind()))},
                   {"message", e.what()}});
      }
    }
    if (!tree && fallback) {
      try {
        tree = fallback_segment(r.text, r.id);
        tree->meta["segmenter"] = "sentence-fallback";
        ++used_fallback;
      } catch (const Error& e) {
        log_event({{"event", "parse_failure"}, {"doc_id", r.id}, {"error", std::string(error_kind_name(e.kind()))},
                   {"message", e.what()}});
      }
    }
    if (!tree) {
      ++failed;
      continue;
    }
    append_tree_jsonl(out, *tree);
  }
  if (!fs::exists(out)) write_text(out, "");
  const json summary{{"documents", corpus.records.size()}, {"cached", skipped},     {"parsed", parsed},
                     {"fallback", used_fallback},           {"failed", failed},      {"excluded_records", corpus.excluded.size()},
                     {"out", out}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- build-dataset

SplitAssignment make_split(const std::vector<Record>& records, const Settings& s, std::uint64_t seed) {
  const std::string& mode = s.train.split;
  if (mode == "stratified") return stratified_split(records, s.ratios, seed);
  if (mode == "group") return group_aware_split(records, s.ratios, seed);
  if (mode.rfind("lodo:", 0) == 0) return leave_one_domain_out(records, parse_domain(mode.substr(5)), seed);
  fail(ErrorKind::ConfigMismatch, "unknown split mode '" + mode + "' (stratified | group | lodo:<domain>)");
}

int cmd_build_dataset(const std::string& input, const fs::path& run, const Settings& s) {
  const Corpus corpus = load_hart(input);
  if (corpus.records.empty()) fail(ErrorKind::DataMissing, "no usable records under " + input);
  const std::uint64_t seed = s.train.seeds.front();
  const SplitAssignment split = make_split(corpus.records, s, seed);
  fs::create_directories(run);
  write_records_jsonl((run / "corpus.jsonl").string(), corpus.records);
  std::ostringstream ex;
  for (const auto& e : corpus.excluded) ex << json{{"id", e.id}, {"reason", e.reason}}.dump() << '\n';
  write_text(run / "exclusions.jsonl", ex.str());
  for (Partition p : {Partition::Train, Partition::Val, Partition::Test}) {
    write_manifest((run / ("manifest_" + std::string(partition_name(p)) + ".jsonl")).string(), corpus.records, split,
                   p);
  }
  const SplitStats stats = split_stats(corpus.records, split);
  write_text(run / "split_stats.txt", format_split_stats(stats));
  write_text(run / "split_stats.json", split_stats_json(stats).dump(2) + "\n");
  const json meta{{"split", s.train.split},
                  {"seed", seed},
                  {"ratios", {s.ratios.train, s.ratios.val, s.ratios.test}},
                  {"records", corpus.records.size()},
                  {"excluded", corpus.excluded.size()},
                  {"warnings", split.warnings}};
  write_text(run / "dataset.json", meta.dump(2) + "\n");
  std::cout << format_split_stats(stats);
  std::cout << meta.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- shared loading

struct RunData {
  std::vector<Record> records;
  SplitAssignment split;
};

RunData load_run(const fs::path& run) {
  const fs::path corpus = run / "corpus.jsonl";
  if (!fs::exists(corpus)) fail(ErrorKind::DataMissing, corpus.string() + " missing; run build-dataset first");
  RunData d;
  d.records = read_records_jsonl(corpus.string());
  std::vector<std::string> manifests;
  for (const char* p : {"train", "val", "test"}) {
    const fs::path m = run / (std::string("manifest_") + p + ".jsonl");
    if (!fs::exists(m)) fail(ErrorKind::DataMissing, m.string() + " missing");
    manifests.push_back(m.string());
  }
  d.split = read_manifests(manifests);
  return d;
}

std::map<std::string, RstTree> load_trees(const std::string& path) {
  if (path.empty() || !fs::exists(path)) fail(ErrorKind::DataMissing, "tree cache '" + path + "' not found");
  return read_trees_jsonl(path);
}

std::vector<Example> examples_for(const RunData& d, std::optional<Partition> which,
                                  const std::map<std::string, RstTree>& trees, const Encoder& encoder,
                                  const EmbeddingCache& cache, bool borrow_empty) {
  std::vector<Example> out;
  for (const Record& r : d.records) {
    auto part = d.split.partition_of.find(r.id);
    if (part == d.split.partition_of.end()) continue;
    if (which && part->second != *which) continue;
    auto it = trees.find(r.id);
    if (it == trees.end()) fail(ErrorKind::DataMissing, r.id + ": no cached tree; run parse-cache");
    try {
      const TokenEmbeddingMatrix emb = cache.get_or_embed(r.id, r.text, encoder);
      out.push_back(make_example(r.id, static_cast<int>(r.label), std::string(domain_name(r.domain)), it->second,
                                 emb, borrow_empty));
    } catch (const Error& e) {
      fail(e.kind(), r.id + ": " + e.what());
    }
  }
  return out;
}

EncoderIdentity identity_of(const Encoder& e) { return {e.name(), e.revision(), e.dim()}; }

// ---------------------------------------------------------------- train

int cmd_train(const fs::path& run, const std::string& trees_path, const Settings& s) {
  const RunData data = load_run(run);
  const auto trees = load_trees(trees_path);
  const auto encoder = make_encoder(s.encoder, s.model.plm_dim);
  const EmbeddingCache cache(cache_root(run));
  const auto train_set = examples_for(data, Partition::Train, trees, *encoder, cache, s.borrow_empty);
  const auto val_set = examples_for(data, Partition::Val, trees, *encoder, cache, s.borrow_empty);
  const auto test_set = examples_for(data, Partition::Test, trees, *encoder, cache, s.borrow_empty);
  write_text(run / "config.json", settings_json(s).dump(2) + "\n");

  std::vector<MetricsReport> test_reports;
  for (std::uint64_t seed : s.train.seeds) {
    const fs::path dir = run / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    std::ofstream history(dir / "history.jsonl");
    const TrainResult result = train(train_set, val_set, s.model, s.train, seed, identity_of(*encoder),
                                     [&](const EpochRecord& rec) {
                                       history << rec.to_json().dump() << '\n';
                                       history.flush();
                                       std::cerr << json{{"seed", seed}, {"epoch", rec.to_json()}}.dump() << '\n';
                                     });
    save_checkpoint((dir / "checkpoint.bin").string(), result.checkpoint);
    std::cout << "seed " << seed << ": selected epoch " << result.best_epoch << '\n';
    if (!test_set.empty()) {
      const Evaluation ev = evaluate(result.checkpoint.params, s.model, test_set);
      write_text(dir / "report_test.json", ev.report.to_json().dump(2) + "\n");
      std::cout << format_report(ev.report);
      test_reports.push_back(ev.report);
    }
  }
  if (test_reports.size() >= 2) {
    const auto agg = aggregate_seeds(test_reports);
    write_text(run / "aggregate_test.json", aggregate_json(agg).dump(2) + "\n");
    for (const char* key : {"macro_auroc", "macro_tpr_at_1fpr"}) {
      if (auto it = agg.find(key); it != agg.end()) {
        std::printf("%s over %zu seeds: %.2f +- %.2f\n", key, it->second.runs, 100 * it->second.mean,
                    100 * it->second.std);
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const fs::path& run, const std::string& trees_path, std::string checkpoint_path,
                 const std::string& partition, const Settings& s) {
  if (checkpoint_path.empty()) {
    checkpoint_path = (run / ("seed-" + std::to_string(s.train.seeds.front())) / "checkpoint.bin").string();
  }
  if (!fs::exists(checkpoint_path)) fail(ErrorKind::DataMissing, "checkpoint " + checkpoint_path + " not found");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const RunData data = load_run(run);
  const auto trees = load_trees(trees_path);
  const auto encoder = make_encoder(s.encoder, ck.config.plm_dim);
  const auto examples = examples_for(data, parse_partition(partition), trees, *encoder,
                                     EmbeddingCache(cache_root(run)), s.borrow_empty);
  if (examples.empty()) fail(ErrorKind::DataMissing, "partition " + partition + " is empty");
  const Evaluation ev = evaluate(ck, identity_of(*encoder), examples);
  json report = ev.report.to_json();
  try {
    report["macro_tpr_at_cap"] = {{"cap", s.fpr_cap}, {"value", macro_tpr_at_fpr(ev.table, s.fpr_cap)}};
  } catch (const Error& e) {
    report["macro_tpr_at_cap"] = {{"cap", s.fpr_cap}, {"error", e.what()}};
  }
  write_text(run / ("eval_" + partition + ".json"), report.dump(2) + "\n");
  std::cout << format_report(ev.report);
  return 0;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const std::string& checkpoint_path, const std::string& input, const std::string& trees_path,
                const std::string& out_path, bool fallback, const Settings& s) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  EncoderSettings es = s.encoder;
  es.mode = ck.encoder.name == "mock" ? "mock" : "real";
  const auto encoder = make_encoder(es, ck.config.plm_dim);
  if (!(identity_of(*encoder) == ck.encoder)) {
    fail(ErrorKind::ConfigMismatch, "checkpoint expects " + ck.encoder.name + "@" + ck.encoder.revision +
                                        " features, configured encoder is " + encoder->name() + "@" +
                                        encoder->revision());
  }
  std::map<std::string, RstTree> trees;
  if (!trees_path.empty()) trees = load_trees(trees_path);

  std::ifstream in(input);
  if (!in) fail(ErrorKind::IoError, "cannot open " + input);
  std::ostringstream out;
  std::string line;
  std::size_t count = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::SchemaError, input + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("text") || !j["id"].is_string() || !j["text"].is_string()) {
      fail(ErrorKind::SchemaError, input + ":" + std::to_string(line_no) + ": needs string fields id and text");
    }
    const std::string id = j["id"].get<std::string>();
    const std::string text = j["text"].get<std::string>();
    RstTree tree;
    if (auto it = trees.find(id); it != trees.end()) {
      tree = it->second;
    } else if (fallback) {
      tree = fallback_segment(text, id);
    } else {
      fail(ErrorKind::DataMissing, id + ": no cached tree (pass --fallback to segment by sentence)");
    }
    const TokenEmbeddingMatrix emb = encoder->embed(text);
    const LogicGraph graph = build_graph(tree);
    const Prediction p = forward(graph, emb, align_spans(tree, emb, s.borrow_empty), ck.params, ck.config);
    Eigen::Index best = 0;
    p.probs.maxCoeff(&best);
    std::vector<double> probs(p.probs.data(), p.probs.data() + p.probs.size());
    out << json{{"doc_id", id}, {"probs", probs}, {"label", std::string(label_name(static_cast<Label>(best)))}}.dump() << '\n';
    ++count;
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << out.str();
  } else {
    write_text(out_path, out.str());
    std::cout << json{{"predictions", count}, {"out", out_path}}.dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const fs::path& run, const std::string& trees_path) {
  const RunData data = load_run(run);
  const auto trees = load_trees(trees_path);
  std::vector<AnalysisDoc> docs;
  std::size_t missing = 0;
  for (const Record& r : data.records) {
    auto it = trees.find(r.id);
    if (it == trees.end()) {
      ++missing;
      continue;
    }
    docs.push_back(make_analysis_doc(r, it->second));
  }
  const RelationProfile profile = zscore_profile(docs);
  std::vector<CosineSummary> rows;
  json skipped = json::array();
  for (const auto& [a, b] : similarity_table_pairs()) {
    try {
      rows.push_back(pairwise_cosine(a, b, docs));
    } catch (const Error& e) {
      skipped.push_back({{"reference", std::string(label_name(a))}, {"target", std::string(label_name(b))}, {"error", e.what()}});
    }
  }
  const fs::path dir = run / "analysis";
  write_text(dir / "radar.tsv", radar_tsv(profile));
  json pj = profile_json(profile);
  pj["documents_without_tree"] = missing;
  write_text(dir / "zscore.json", pj.dump(2) + "\n");
  json sj = {{"rows", similarity_json(rows)}, {"skipped", skipped}};
  write_text(dir / "similarity.json", sj.dump(2) + "\n");
  write_text(dir / "similarity.txt", format_similarity_table(rows));
  std::cout << format_similarity_table(rows);
  std::cout << json{{"documents", docs.size()}, {"without_tree", missing}, {"excluded_no_internals", profile.excluded},
                    {"out", dir.string()}}
                   .dump()
            << '\n';
  return 0;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (flags override it)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seeds, "seed(s); repeat or comma-separate")->delimiter(',');
  cmd->add_option("--split", o.split, "stratified | group | lodo:<domain>");
  cmd->add_option("--encoder", o.encoder, "mock | real")->check(CLI::IsMember({"mock", "real"}));
  cmd->add_option("--encoder-cmd", o.encoder_cmd, "helper command for the real encoder");
  cmd->add_option("--ratios", o.ratios, "train,val,test fractions")->delimiter(',');
  cmd->add_option("--fpr-cap", o.fpr_cap, "false-positive cap for TPR reporting and selection");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--lr", o.learning_rate);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"race: rhetorical-structure detector for four-class machine-generated text"};
  app.require_subcommand(1);
  Overrides o;

  std::string out_dir, input, out, parser_cmd, run_dir, trees, checkpoint, partition = "test";
  std::size_t groups = 100;
  std::uint64_t synth_seed = 7;
  bool fallback = false;

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted relation signatures");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--groups", groups, "groups of four variants");
  synth->add_option("--seed", synth_seed);

  auto* parse = app.add_subcommand("parse-cache", "cache one discourse tree per document");
  parse->add_option("--input", input, "HART file or directory")->required()->check(CLI::ExistingPath);
  parse->add_option("--out", out, "tree cache (JSON lines)")->required();
  parse->add_option("--parser-cmd", parser_cmd, "reads text on stdin, prints one tree record");
  parse->add_flag("--fallback", fallback, "sentence segmentation when no parser output is available");

  auto* build = app.add_subcommand("build-dataset", "label, filter and split the raw corpus");
  build->add_option("--input", input)->required()->check(CLI::ExistingPath);
  build->add_option("--run", run_dir)->required();
  add_common(build, o);

  auto* trn = app.add_subcommand("train", "train one checkpoint per seed");
  trn->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  trn->add_option("--trees", trees)->required();
  add_common(trn, o);

  auto* ev = app.add_subcommand("evaluate", "report metrics for a partition");
  ev->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--trees", trees)->required();
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--partition", partition)->check(CLI::IsMember({"train", "val", "test"}));
  add_common(ev, o);

  auto* pred = app.add_subcommand("predict", "per-document class probabilities");
  pred->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  pred->add_option("--input", input, "JSON lines with id and text")->required()->check(CLI::ExistingFile);
  pred->add_option("--trees", trees);
  pred->add_option("--out", out, "output file, - for stdout");
  pred->add_flag("--fallback", fallback);
  add_common(pred, o);

  auto* an = app.add_subcommand("analyze", "Z-score profiles and relation similarity");
  an->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  an->add_option("--trees", trees)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(out_dir, groups, synth_seed);
    if (*parse) return cmd_parse_cache(input, out, parser_cmd, fallback);
    if (*an) return cmd_analyze(run_dir, trees);
    const Settings s = resolve(o);
    if (*build) return cmd_build_dataset(input, run_dir, s);
    if (*trn) return cmd_train(run_dir, trees, s);
    if (*ev) return cmd_evaluate(run_dir, trees, checkpoint, partition, s);
    if (*pred) return cmd_predict(checkpoint, input, trees, out, fallback, s);
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(error_kind_name(e.kind()))}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 3;
  }
  return 0;
}
