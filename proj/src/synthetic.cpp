#include "race/synthetic.hpp"

#include "race/common.hpp"
#include "race/dataset.hpp"

namespace race {

using nlohmann::json;

namespace {

const std::array<const char*, 4> kDomainTags{"arxiv", "essay", "news", "writing"};

std::string make_word(Rng& rng) {
  static const char* kOnsets[] = {"b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "st", "tr", "pl"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ea", "io"};
  std::string w;
  const int syllables = 1 + static_cast<int>(rng.uniform_index(3));
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[rng.uniform_index(std::size(kOnsets))];
    w += kVowels[rng.uniform_index(std::size(kVowels))];
  }
  return w;
}

struct Builder {
  RstTree tree;
  Rng* rng;
  const std::vector<Relation>* signature;
  double mass;

  Relation draw_relation() {
    const auto& shared = synthetic_shared_relations();
    if (rng->uniform01() < mass) return (*signature)[rng->uniform_index(signature->size())];
    return shared[rng->uniform_index(shared.size())];
  }

  // Joins leaves [lo, hi) and returns the subtree id; internals land in
  // post-order.
  int build(int lo, int hi, int& next_id) {
    if (hi - lo == 1) return lo;
    const int n = hi - lo;
    // Split near the middle so roots see internal children.
    int cut = lo + n / 2;
    if (n > 3 && rng->uniform01() < 0.5) cut += rng->uniform01() < 0.5 ? -1 : 1;
    const int left = build(lo, cut, next_id);
    const int right = build(cut, hi, next_id);
    InternalNode node;
    node.id = next_id++;
    node.relation = draw_relation();
    node.left = left;
    node.right = right;
    tree.internals.push_back(node);
    tree.nuclearity.push_back(rng->uniform01() < 0.5 ? "NS" : "NN");
    return node.id;
  }
};

}  // namespace

const std::array<std::vector<Relation>, 4>& synthetic_signatures() {
  using R = Relation;
  static const std::array<std::vector<Relation>, 4> sig{{
      {R::Attribution, R::Background},
      {R::Contrast, R::Comparison},
      {R::Elaboration, R::Evaluation},
      {R::Enablement, R::Explanation},
  }};
  return sig;
}

const std::vector<Relation>& synthetic_shared_relations() {
  static const std::vector<Relation> shared{Relation::Joint, Relation::SameUnit, Relation::Temporal};
  return shared;
}

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.min_leaves < 2 || o.max_leaves < o.min_leaves) {
    fail(ErrorKind::ConfigMismatch, "synthetic leaves need 2 <= min_leaves <= max_leaves");
  }
  Rng rng(o.seed);
  std::vector<std::string> vocab;
  for (int i = 0; i < 300; ++i) vocab.push_back(make_word(rng));

  SyntheticCorpus out;
  for (std::size_t g = 0; g < o.groups; ++g) {
    const std::string domain = kDomainTags[g % kDomainTags.size()];
    const std::string base = domain + "/doc" + std::to_string(g);
    const std::array<json, 4> variants{{
        {{"id", base}, {"content_source", "human"}, {"language_source", "human"}},
        {{"id", "rep/" + base}, {"content_source", "human"}, {"language_source", "rephrase:gpt-4o"}},
        {{"id", "gen/" + base}, {"content_source", "machine:gpt-4o"}, {"language_source", "machine:gpt-4o"}},
        {{"id", "hum/gen/" + base}, {"content_source", "machine:gpt-4o"}, {"language_source", "humanize:human"}},
    }};
    for (std::size_t k = 0; k < variants.size(); ++k) {
      json record = variants[k];
      const int leaves = o.min_leaves + static_cast<int>(rng.uniform_index(
                                            static_cast<std::uint64_t>(o.max_leaves - o.min_leaves + 1)));
      Builder b{RstTree{}, &rng, &synthetic_signatures()[k], o.signature_mass};
      b.tree.doc_id = record["id"];
      std::string text;
      for (int e = 0; e < leaves; ++e) {
        const std::size_t start = text.size();
        const int words = 5 + static_cast<int>(rng.uniform_index(8));
        for (int w = 0; w < words; ++w) {
          std::string word = vocab[rng.uniform_index(vocab.size())];
          if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
          text += word;
          text += w + 1 < words ? " " : ".";
        }
        if (e + 1 < leaves) text += ' ';
        b.tree.edus.push_back({e, start, text.size()});
      }
      b.tree.document = text;
      int next_id = leaves;
      b.tree.root_id = b.build(0, leaves, next_id);
      record["text"] = text;
      record["domain"] = domain;
      out.trees.emplace(record["id"].get<std::string>(), std::move(b.tree));
      out.raw.push_back(std::move(record));
    }
  }
  return out;
}

}  // namespace race
