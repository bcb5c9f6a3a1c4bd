#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <string>
#include <vector>

#include "formtree/corpus.hpp"
#include "formtree/metrics.hpp"
#include "formtree/rng.hpp"
#include "support/ted_oracle.hpp"

using namespace formtree;
using namespace formtree::metrics;
using formtree::doc::Forest;
using formtree::doc::HierTree;

namespace {

OrderedTree make_tree(const std::vector<int>& parent, const std::vector<std::string>& labels) {
  OrderedTree t;
  t.nodes.resize(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    t.nodes[i].label = labels[i];
    if (parent[i] >= 0) t.nodes[parent[i]].children.push_back(static_cast<int>(i));
  }
  return t;
}

OrderedTree random_tree(int n, Rng& rng) {
  static const std::vector<std::string> alphabet = {"a", "b", "c"};
  std::vector<int> parent(n, -1);
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) {
    if (i) parent[i] = rng.uniform_int(0, i - 1);
    labels[i] = rng.pick(alphabet);
  }
  return make_tree(parent, labels);
}

corpus::Corpus sample_corpus(std::uint64_t seed = 19, int n = 6) {
  corpus::GenConfig cfg;
  cfg.seed = seed;
  cfg.n_docs = n;
  cfg.p_nest = 0.4;
  return corpus::generate_corpus(cfg);
}

std::vector<Forest> gts(const corpus::Corpus& c) {
  std::vector<Forest> out;
  for (const auto& ld : c.docs) out.push_back(ld.gt);
  return out;
}

std::vector<doc::Document> docs(const corpus::Corpus& c) {
  std::vector<doc::Document> out;
  for (const auto& ld : c.docs) out.push_back(ld.doc);
  return out;
}

}  // namespace

TEST_CASE("field_f1 is perfect on identical forests") {
  const corpus::Corpus c = sample_corpus();
  for (const auto& ld : c.docs) {
    const MatchReport r = field_f1(ld.gt, ld.gt);
    CHECK(r.micro.f1() == 1.0);
    CHECK(r.micro.fp == 0);
    CHECK(r.micro.fn == 0);
    CHECK(r.macro_f1() == 1.0);
  }
}

TEST_CASE("a field missing one member unit is both fp and fn") {
  const corpus::Corpus c = sample_corpus();
  // find a doc with a multi-unit field and move its last member to a new text tree
  for (const auto& ld : c.docs) {
    Forest mangled = ld.gt;
    int moved = -1;
    for (auto& t : mangled.trees) {
      for (auto& n : t.nodes) {
        if (n.field.member_units.size() < 2) continue;
        moved = n.field.member_units.back();
        n.field.member_units.pop_back();
        break;
      }
      if (moved >= 0) break;
    }
    if (moved < 0) continue;
    HierTree extra;
    doc::HierNode en;
    en.field.role = "text";
    en.field.member_units = {moved};
    en.field.head_unit = moved;
    en.parent = -1;
    en.rel_type = 0;
    extra.nodes.push_back(en);
    mangled.trees.push_back(extra);

    const MatchReport r = field_f1(mangled, ld.gt);
    CHECK(r.micro.fp >= 2);  // shrunken field + invented text field
    CHECK(r.micro.fn >= 1);  // original field unmatched
    return;
  }
  FAIL("corpus had no multi-unit field");
}

TEST_CASE("empty prediction scores zero recall but is not an error") {
  const corpus::Corpus c = sample_corpus(23, 1);
  const auto& ld = c.docs[0];
  Forest empty;  // covers no units: that is a different-unit-set error
  CHECK_THROWS(field_f1(empty, ld.gt));
  // all-singleton prediction covers the same units but misses all real fields
  doc::UnifiedLabels ul;
  const int n = ld.doc.n_units();
  ul.parent.resize(n);
  ul.rel_type.assign(n, c.schema.root_index());
  for (int j = 0; j < n; ++j) ul.parent[j] = j;
  const Forest singles = doc::forest_from_labels(ld.doc, ul, c.schema);
  const MatchReport r = field_f1(singles, ld.gt);
  bool gt_has_multi = false;
  for (const auto& t : ld.gt.trees)
    for (const auto& nd : t.nodes) gt_has_multi |= nd.field.member_units.size() > 1;
  if (gt_has_multi) CHECK(r.micro.recall() < 1.0);
  CHECK(r.per_class.count("key"));
  CHECK(r.per_class.at("key").tp == 0);  // singles are all role text
}

TEST_CASE("tree_f1: one wrong edge type unmatches exactly that tree") {
  const corpus::Corpus c = sample_corpus(29, 1);
  const auto& ld = c.docs[0];
  REQUIRE(ld.gt.trees.size() >= 2);
  Forest mangled = ld.gt;
  int flipped = -1;
  for (std::size_t t = 0; t < mangled.trees.size() && flipped < 0; ++t)
    for (auto& n : mangled.trees[t].nodes) {
      if (n.parent < 0) continue;
      n.rel_type = n.rel_type == 5 ? 6 : 5;
      flipped = static_cast<int>(t);
      break;
    }
  REQUIRE(flipped >= 0);
  const MatchReport r = tree_f1(mangled, ld.gt);
  CHECK(r.micro.tp == static_cast<int>(ld.gt.trees.size()) - 1);
  CHECK(r.micro.fp == 1);
  CHECK(r.micro.fn == 1);

  // permutation invariance
  Forest reversed = ld.gt;
  std::reverse(reversed.trees.begin(), reversed.trees.end());
  const MatchReport rr = tree_f1(reversed, ld.gt);
  CHECK(rr.micro.f1() == 1.0);
}

TEST_CASE("tree edit distance: hand-checked cases") {
  const OrderedTree a = make_tree({-1, 0, 0}, {"a", "b", "c"});
  const OrderedTree b = make_tree({-1, 0}, {"a", "b"});
  CHECK(tree_edit_distance(a, a) == 0);
  CHECK(tree_edit_distance(a, b) == 1);  // delete c
  CHECK(teds_views(a, b) == doctest::Approx(1.0 - 1.0 / 3.0));

  const OrderedTree x = make_tree({-1}, {"x"});
  const OrderedTree y = make_tree({-1}, {"y"});
  CHECK(tree_edit_distance(x, y) == 1);
  CHECK(teds_views(x, y) == 0.0);
  CHECK(teds_views(x, x) == 1.0);

  // relabel beats delete+insert: a(b) vs a(c)
  const OrderedTree p = make_tree({-1, 0}, {"a", "b"});
  const OrderedTree q = make_tree({-1, 0}, {"a", "c"});
  CHECK(tree_edit_distance(p, q) == 1);

  // order matters for ordered trees: a(b,c) vs a(c,b)
  const OrderedTree o1 = make_tree({-1, 0, 0}, {"a", "b", "c"});
  const OrderedTree o2 = make_tree({-1, 0, 0}, {"a", "c", "b"});
  CHECK(tree_edit_distance(o1, o2) == 2);

  CHECK_THROWS(tree_edit_distance(OrderedTree{}, x));
}

TEST_CASE("zhang-shasha equals the exhaustive mapping oracle") {
  Rng rng(31);
  for (int rep = 0; rep < 80; ++rep) {
    const OrderedTree a = random_tree(rng.uniform_int(1, 6), rng);
    const OrderedTree b = random_tree(rng.uniform_int(1, 6), rng);
    const int fast = tree_edit_distance(a, b);
    const int slow = ftcheck::brute_force_ted(a, b);
    REQUIRE(fast == slow);
  }
}

TEST_CASE("ted is symmetric, zero on identity, bounded; triangle holds") {
  Rng rng(37);
  for (int rep = 0; rep < 30; ++rep) {
    const OrderedTree a = random_tree(rng.uniform_int(1, 6), rng);
    const OrderedTree b = random_tree(rng.uniform_int(1, 6), rng);
    const OrderedTree c = random_tree(rng.uniform_int(1, 6), rng);
    const int ab = tree_edit_distance(a, b);
    CHECK(ab == tree_edit_distance(b, a));
    CHECK(tree_edit_distance(a, a) == 0);
    CHECK(ab <= a.size() + b.size());
    CHECK(tree_edit_distance(a, c) <= ab + tree_edit_distance(b, c));
    const double s = teds_views(a, b);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("teds on document trees uses roles and normalized text") {
  const corpus::Corpus c = sample_corpus(43, 1);
  const auto& ld = c.docs[0];
  for (const auto& t : ld.gt.trees) CHECK(teds(ld.doc, t, t) == 1.0);

  // text normalization: case and runs of spaces do not matter
  doc::Document d2 = ld.doc;
  for (auto& u : d2.units) {
    std::string up;
    for (char ch : u.text)
      up += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    u.text = "  " + up + "  ";
  }
  const OrderedTree v1 = tree_view(ld.doc, ld.gt.trees[0]);
  const OrderedTree v2 = tree_view(d2, ld.gt.trees[0]);
  for (int i = 0; i < v1.size(); ++i) CHECK(v1.nodes[i].label == v2.nodes[i].label);
}

TEST_CASE("corpus_eval: perfect predictions score 1 everywhere") {
  const corpus::Corpus c = sample_corpus(47, 5);
  const CorpusReport r = corpus_eval(gts(c), gts(c), docs(c));
  CHECK(r.field.micro.f1() == 1.0);
  CHECK(r.tree.micro.f1() == 1.0);
  CHECK(r.mean_teds == doctest::Approx(1.0));
  for (const auto& [k, v] : r.teds_by_kind) CHECK(v == doctest::Approx(1.0));
  CHECK(r.teds_by_kind.count("kvp"));
  CHECK(r.teds_by_kind.count("choice_group"));
  CHECK(r.n_docs == 5);
}

TEST_CASE("corpus_eval: all-singleton predictions score poorly but validly") {
  const corpus::Corpus c = sample_corpus(53, 4);
  std::vector<Forest> preds;
  for (const auto& ld : c.docs) {
    doc::UnifiedLabels ul;
    const int n = ld.doc.n_units();
    ul.parent.resize(n);
    ul.rel_type.assign(n, c.schema.root_index());
    for (int j = 0; j < n; ++j) ul.parent[j] = j;
    preds.push_back(doc::forest_from_labels(ld.doc, ul, c.schema));
  }
  const CorpusReport r = corpus_eval(preds, gts(c), docs(c));
  CHECK(r.mean_teds < 0.9);
  CHECK(r.mean_teds >= 0.0);
  CHECK(r.tree.micro.f1() < 1.0);
  // kvp trees can never be matched by singleton predictions
  CHECK(r.tree.per_class.at("kvp").tp == 0);
}

TEST_CASE("corpus_eval: single doc aggregate equals the single-tree metric") {
  const corpus::Corpus c = sample_corpus(59, 1);
  const auto& ld = c.docs[0];
  Forest one_tree_gt;
  one_tree_gt.trees.push_back(ld.gt.trees[0]);
  const CorpusReport r = corpus_eval({one_tree_gt}, {one_tree_gt}, {ld.doc});
  CHECK(r.mean_teds == doctest::Approx(teds(ld.doc, ld.gt.trees[0], ld.gt.trees[0])));

  CHECK_THROWS(corpus_eval({one_tree_gt}, {}, {ld.doc}));  // length mismatch
}

TEST_CASE("greedy pairing prefers lower indices on ties") {
  const corpus::Corpus c = sample_corpus(61, 1);
  const auto& ld = c.docs[0];
  // gt: two structurally identical singleton text trees (distinct units)
  doc::UnifiedLabels ul;
  const int n = ld.doc.n_units();
  ul.parent.resize(n);
  ul.rel_type.assign(n, c.schema.root_index());
  for (int j = 0; j < n; ++j) ul.parent[j] = j;
  const Forest singles = doc::forest_from_labels(ld.doc, ul, c.schema);
  const CorpusReport r = corpus_eval({singles}, {singles}, {ld.doc});
  CHECK(r.mean_teds == doctest::Approx(1.0));  // every tree finds some perfect partner
}

TEST_CASE("report renderers include the headline numbers") {
  const corpus::Corpus c = sample_corpus(67, 2);
  const CorpusReport r = corpus_eval(gts(c), gts(c), docs(c));
  const std::string js = report_json(r);
  CHECK(js.find("\"mean_teds\"") != std::string::npos);
  CHECK(js.find("\"field\"") != std::string::npos);
  CHECK(js.find("\"tree\"") != std::string::npos);
  const std::string table = report_table(r);
  CHECK(table.find("field (micro)") != std::string::npos);
  CHECK(table.find("teds (mean)") != std::string::npos);
}
