#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "formtree/doc_model.hpp"
#include "formtree/relation_graph.hpp"

using namespace formtree::doc;

namespace {

// Units on a grid, one per row, uniform height: reading order == id order.
Document grid_doc(int n) {
  Document d;
  d.doc_id = "t";
  d.page_width = 1000;
  d.page_height = 1400;
  for (int i = 0; i < n; ++i) {
    BasicUnit u;
    u.id = i;
    u.kind = UnitKind::TextLine;
    const double y = 0.05 + 0.1 * i;
    u.bbox = {0.1, y, 0.4, y + 0.04};
    u.text = "u" + std::to_string(i);
    d.units.push_back(u);
  }
  return d;
}

HierNode node(std::string role, std::vector<int> members, int parent, int rel,
              std::vector<int> children = {}) {
  HierNode n;
  n.field.role = std::move(role);
  n.field.member_units = members;
  n.field.head_unit = members.front();
  n.parent = parent;
  n.rel_type = rel;
  n.children = std::move(children);
  return n;
}

}  // namespace

TEST_CASE("relation label set: default layout and categories") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  CHECK(ls.size() == 7);
  CHECK(ls.root_index() == 0);
  CHECK(ls.name(0) == "root");
  CHECK(ls.category(0) == RelCategory::Root);
  CHECK(ls.category(ls.index_of("intra-key")) == RelCategory::IntraField);
  CHECK(ls.category(ls.index_of("intra-cf")) == RelCategory::IntraField);
  CHECK(ls.category(ls.index_of("inter-kvp")) == RelCategory::InterField);
  CHECK(ls.category(ls.index_of("inter-cg")) == RelCategory::InterField);
  CHECK(ls.find("inter-kvp") == 5);
  CHECK(ls.find("absent") == -1);
  CHECK_THROWS_AS((void)ls.index_of("absent"), std::out_of_range);
}

TEST_CASE("relation label set: malformed vocabularies rejected") {
  CHECK_THROWS(RelationLabelSet::from_names({}));
  CHECK_THROWS(RelationLabelSet::from_names({"intra-key"}));                  // no root
  CHECK_THROWS(RelationLabelSet::from_names({"root", "root"}));               // dup root
  CHECK_THROWS(RelationLabelSet::from_names({"root", "intra-k", "intra-k"})); // dup
  CHECK_THROWS(RelationLabelSet::from_names({"root", "sideways-x"}));         // bad prefix
  const RelationLabelSet custom = RelationLabelSet::from_names({"intra-a", "root", "inter-b"});
  CHECK(custom.root_index() == 1);
}

TEST_CASE("unit kind names round trip") {
  for (UnitKind k : {UnitKind::TextLine, UnitKind::TextWidget, UnitKind::ChoiceWidget})
    CHECK(unit_kind_from_name(unit_kind_name(k)) == k);
  CHECK_THROWS(unit_kind_from_name("blob"));
}

TEST_CASE("validate_document flags each violation") {
  Document d = grid_doc(3);
  CHECK(validate_document(d).empty());

  Document empty = d;
  empty.units.clear();
  CHECK(!validate_document(empty).empty());

  Document dup = d;
  dup.units[2].id = 1;
  auto v = validate_document(dup);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("id density") != std::string::npos);

  Document flipped = d;
  flipped.units[0].bbox = {0.5, 0.2, 0.1, 0.3};
  v = validate_document(flipped);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("bbox order") != std::string::npos);

  Document outside = d;
  outside.units[1].bbox = {0.9, 0.1, 1.2, 0.2};
  v = validate_document(outside);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("bbox bounds") != std::string::npos);

  Document flat = d;
  flat.page_height = 0;
  CHECK(!validate_document(flat).empty());
}

TEST_CASE("validate_labels enforces the self-loop and forest invariants") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  UnifiedLabels ok{{0, 0, 1}, {0, ls.index_of("inter-kvp"), ls.index_of("intra-value")}};
  CHECK(validate_labels(3, ok, ls).empty());

  CHECK(!validate_labels(2, ok, ls).empty());  // size mismatch

  UnifiedLabels oob{{0, 5}, {0, 5}};
  CHECK(!validate_labels(2, oob, ls).empty());  // parent out of range

  UnifiedLabels badtype{{0, 0}, {0, 99}};
  CHECK(!validate_labels(2, badtype, ls).empty());

  UnifiedLabels self_nonroot{{0, 1}, {0, ls.index_of("inter-kvp")}};
  CHECK(!validate_labels(2, self_nonroot, ls).empty());  // self edge typed inter

  UnifiedLabels root_nonself{{0, 0}, {0, 0}};
  CHECK(!validate_labels(2, root_nonself, ls).empty());  // unit 1 typed root, parent 0

  UnifiedLabels cyc{{1, 2, 0}, {5, 5, 5}};
  auto v = validate_labels(3, cyc, ls);
  REQUIRE(!v.empty());
  CHECK(v[0].find("cycle") != std::string::npos);
}

TEST_CASE("reading order clusters rows on y-centers then sorts by x") {
  Document d;
  d.page_width = d.page_height = 100;
  auto add = [&](double x1, double y1, double x2, double y2) {
    BasicUnit u;
    u.id = static_cast<int>(d.units.size());
    u.bbox = {x1, y1, x2, y2};
    d.units.push_back(u);
  };
  // heights all 0.05 -> median 0.05, tolerance 0.025
  add(0.5, 0.00, 0.7, 0.05);  // row 0, right
  add(0.0, 0.01, 0.2, 0.06);  // row 0, left (y-center within tolerance)
  add(0.0, 0.50, 0.2, 0.55);  // row 1
  CHECK(reading_order(d) == std::vector<int>{1, 0, 2});
  const auto rank = reading_rank(d);
  CHECK(rank[1] == 0);
  CHECK(rank[0] == 1);
  CHECK(rank[2] == 2);
}

TEST_CASE("reading order: ties broken by x1 then y1 then id") {
  Document d;
  d.page_width = d.page_height = 10;
  auto add = [&](double x1, double y1) {
    BasicUnit u;
    u.id = static_cast<int>(d.units.size());
    u.bbox = {x1, y1, x1 + 0.1, y1 + 0.05};
    d.units.push_back(u);
  };
  add(0.3, 0.10);
  add(0.3, 0.11);  // same row, same x1, later y1
  add(0.1, 0.105);
  CHECK(reading_order(d) == std::vector<int>{2, 0, 1});
}

TEST_CASE("labels_from_forest: singleton text field maps to a self loop") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(1);
  Forest f;
  f.trees.push_back(HierTree{{node("text", {0}, -1, ls.root_index())}, false, {}});
  const UnifiedLabels ul = labels_from_forest(d, f, ls);
  CHECK(ul.parent == std::vector<int>{0});
  CHECK(ul.rel_type == std::vector<int>{ls.root_index()});
  CHECK(forests_equal(forest_from_labels(d, ul, ls), f));
}

TEST_CASE("labels_from_forest: two-unit key with one-unit value") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(3);
  Forest f;
  HierTree t;
  t.nodes.push_back(node("key", {0, 1}, -1, ls.root_index(), {1}));
  t.nodes.push_back(node("value", {2}, 0, ls.index_of("inter-kvp")));
  f.trees.push_back(t);
  const UnifiedLabels ul = labels_from_forest(d, f, ls);
  CHECK(ul.parent == std::vector<int>{0, 0, 0});
  CHECK(ul.rel_type == std::vector<int>{ls.root_index(), ls.index_of("intra-key"),
                                        ls.index_of("inter-kvp")});
  const Forest back = forest_from_labels(d, ul, ls);
  CHECK(forests_equal(back, f));
  CHECK(tree_kind(back.trees[0]) == "kvp");
  CHECK(back.trees[0].n_units() == 3);
}

TEST_CASE("labels_from_forest: members listed out of reading order are canonicalized") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(2);
  Forest f;
  HierNode n = node("key", {1, 0}, -1, ls.root_index());
  n.field.head_unit = 1;  // non-canonical on purpose
  f.trees.push_back(HierTree{{n}, false, {}});
  const UnifiedLabels ul = labels_from_forest(d, f, ls);
  CHECK(ul.parent == std::vector<int>{0, 0});
  CHECK(ul.rel_type == std::vector<int>{ls.root_index(), ls.index_of("intra-key")});
  const Forest back = forest_from_labels(d, ul, ls);
  CHECK(back.trees[0].nodes[0].field.member_units == std::vector<int>{0, 1});
  CHECK(back.trees[0].nodes[0].field.head_unit == 0);
}

TEST_CASE("labels_from_forest rejects coverage violations") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(2);

  Forest uncovered;
  uncovered.trees.push_back(HierTree{{node("text", {0}, -1, ls.root_index())}, false, {}});
  CHECK_THROWS_WITH(labels_from_forest(d, uncovered, ls),
                    doctest::Contains("not covered"));

  Forest twice;
  twice.trees.push_back(HierTree{{node("text", {0}, -1, ls.root_index())}, false, {}});
  twice.trees.push_back(HierTree{{node("text", {0, 1}, -1, ls.root_index())}, false, {}});
  CHECK_THROWS_WITH(labels_from_forest(d, twice, ls), doctest::Contains("two fields"));

  Forest ghost;
  ghost.trees.push_back(HierTree{{node("text", {0, 99}, -1, ls.root_index())}, false, {}});
  CHECK_THROWS_WITH(labels_from_forest(d, ghost, ls), doctest::Contains("unknown unit"));

  Forest no_intra;  // multi-unit field whose role has no intra-* type
  no_intra.trees.push_back(HierTree{{node("weird", {0, 1}, -1, ls.root_index())}, false, {}});
  CHECK_THROWS_WITH(labels_from_forest(d, no_intra, ls), doctest::Contains("no intra type"));
}

TEST_CASE("forest_from_labels: all-root labels make singleton text trees") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(4);
  UnifiedLabels ul{{0, 1, 2, 3}, {0, 0, 0, 0}};
  const Forest f = forest_from_labels(d, ul, ls);
  REQUIRE(f.trees.size() == 4);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(f.trees[i].nodes.size() == 1);
    CHECK(f.trees[i].nodes[0].field.role == "text");
    CHECK(f.trees[i].nodes[0].field.member_units == std::vector<int>{i});
    CHECK(tree_kind(f.trees[i]) == "text");
  }
  CHECK(labels_from_forest(d, f, ls) == ul);
}

TEST_CASE("forest_from_labels: lone inter-kvp edge yields key and value singletons") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(2);
  UnifiedLabels ul{{0, 0}, {ls.root_index(), ls.index_of("inter-kvp")}};
  const Forest f = forest_from_labels(d, ul, ls);
  REQUIRE(f.trees.size() == 1);
  const HierTree& t = f.trees[0];
  REQUIRE(t.nodes.size() == 2);
  CHECK(t.nodes[0].field.role == "key");
  CHECK(t.nodes[1].field.role == "value");
  CHECK(t.nodes[1].parent == 0);
  CHECK(t.nodes[0].children == std::vector<int>{1});
  CHECK(tree_kind(t) == "kvp");
  CHECK(labels_from_forest(d, f, ls) == ul);
}

TEST_CASE("forest_from_labels: nested key-value chain alternates roles") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(4);
  const int kvp = ls.index_of("inter-kvp");
  UnifiedLabels ul{{0, 0, 1, 2}, {0, kvp, kvp, kvp}};
  const Forest f = forest_from_labels(d, ul, ls);
  REQUIRE(f.trees.size() == 1);
  const auto& nodes = f.trees[0].nodes;
  REQUIRE(nodes.size() == 4);
  CHECK(nodes[0].field.role == "key");
  CHECK(nodes[1].field.role == "value");
  CHECK(nodes[2].field.role == "key");
  CHECK(nodes[3].field.role == "value");
  CHECK(labels_from_forest(d, f, ls) == ul);
}

TEST_CASE("choice group with widget fields round trips") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  Document d = grid_doc(5);
  d.units[1].kind = UnitKind::ChoiceWidget;
  d.units[1].text.clear();
  d.units[3].kind = UnitKind::ChoiceWidget;
  d.units[3].text.clear();
  const int cg = ls.index_of("inter-cg");
  const int icf = ls.index_of("intra-cf");
  UnifiedLabels ul{{0, 0, 1, 0, 3}, {0, cg, icf, cg, icf}};
  const Forest f = forest_from_labels(d, ul, ls);
  REQUIRE(f.trees.size() == 1);
  const auto& nodes = f.trees[0].nodes;
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[0].field.role == "cgt");
  CHECK(nodes[1].field.role == "cf");
  CHECK(nodes[1].field.member_units == std::vector<int>{1, 2});
  CHECK(nodes[2].field.role == "cf");
  CHECK(nodes[2].field.member_units == std::vector<int>{3, 4});
  CHECK(tree_kind(f.trees[0]) == "choice_group");
  CHECK(labels_from_forest(d, f, ls) == ul);
}

TEST_CASE("singleton choice field under a title resolves to cf by widget kind") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  Document d = grid_doc(2);
  d.units[1].kind = UnitKind::ChoiceWidget;
  UnifiedLabels ul{{0, 0}, {0, ls.index_of("inter-cg")}};
  const Forest f = forest_from_labels(d, ul, ls);
  CHECK(f.trees[0].nodes[0].field.role == "cgt");
  CHECK(f.trees[0].nodes[1].field.role == "cf");
  CHECK(tree_kind(f.trees[0]) == "choice_group");
}

TEST_CASE("entity tree via a custom label set") {
  const RelationLabelSet ls = RelationLabelSet::from_names({"root", "intra-para", "inter-kvp"});
  const Document d = grid_doc(3);
  Forest f;
  f.trees.push_back(
      HierTree{{node("para", {0, 1, 2}, -1, ls.root_index())}, false, {}});
  const UnifiedLabels ul = labels_from_forest(d, f, ls);
  CHECK(ul.parent == std::vector<int>{0, 0, 1});
  CHECK(ul.rel_type ==
        std::vector<int>{0, ls.index_of("intra-para"), ls.index_of("intra-para")});
  const Forest back = forest_from_labels(d, ul, ls);
  CHECK(forests_equal(back, f));
  CHECK(tree_kind(back.trees[0]) == "entity");
}

TEST_CASE("forest ordering follows the reading rank of tree roots") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(4);
  const int kvp = ls.index_of("inter-kvp");
  // tree A rooted at unit 2 (units 2,3), tree B rooted at unit 0 (units 0,1)
  UnifiedLabels ul{{0, 0, 2, 2}, {0, kvp, 0, kvp}};
  const Forest f = forest_from_labels(d, ul, ls);
  REQUIRE(f.trees.size() == 2);
  CHECK(f.trees[0].nodes[0].field.head_unit == 0);
  CHECK(f.trees[1].nodes[0].field.head_unit == 2);
}

TEST_CASE("mixed intra chain: strict throws, tolerant downgrades the tree") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(3);
  UnifiedLabels ul{{0, 0, 1},
                   {0, ls.index_of("intra-key"), ls.index_of("intra-value")}};
  CHECK_THROWS_WITH(forest_from_labels(d, ul, ls, AssembleMode::Strict),
                    doctest::Contains("mixes types"));

  const Forest f = forest_from_labels(d, ul, ls, AssembleMode::Tolerant);
  REQUIRE(f.trees.size() == 1);
  const HierTree& t = f.trees[0];
  CHECK(t.malformed);
  CHECK(!t.diagnostics.empty());
  REQUIRE(t.nodes.size() == 3);  // one singleton per unit
  for (const HierNode& n : t.nodes) {
    CHECK(n.field.role == "unknown");
    CHECK(n.field.member_units.size() == 1);
  }
  // unit-level edges survive with their original types
  CHECK(t.nodes[0].field.head_unit == 0);
  CHECK(t.nodes[1].field.head_unit == 1);
  CHECK(t.nodes[1].parent == 0);
  CHECK(t.nodes[1].rel_type == ls.index_of("intra-key"));
  CHECK(t.nodes[2].parent == 1);
  CHECK(t.nodes[2].rel_type == ls.index_of("intra-value"));
  CHECK(tree_kind(t) == "unknown");
}

TEST_CASE("downgrade is per tree: healthy trees in the same document survive") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(5);
  const int kvp = ls.index_of("inter-kvp");
  UnifiedLabels ul{{0, 0, 2, 2, 3},
                   {0, kvp, 0, ls.index_of("intra-key"), ls.index_of("intra-value")}};
  const Forest f = forest_from_labels(d, ul, ls, AssembleMode::Tolerant);
  REQUIRE(f.trees.size() == 2);
  CHECK(!f.trees[0].malformed);
  CHECK(f.trees[0].nodes[0].field.role == "key");
  CHECK(f.trees[1].malformed);
}

TEST_CASE("inter edge from a non-head unit: strict rejects, tolerant keeps with a note") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(3);
  // key field {0,1}; value hangs off unit 1, the chain tail
  UnifiedLabels ul{{0, 0, 1},
                   {0, ls.index_of("intra-key"), ls.index_of("inter-kvp")}};
  CHECK_THROWS_WITH(forest_from_labels(d, ul, ls, AssembleMode::Strict),
                    doctest::Contains("non-head"));
  const Forest f = forest_from_labels(d, ul, ls, AssembleMode::Tolerant);
  REQUIRE(f.trees.size() == 1);
  const HierTree& t = f.trees[0];
  CHECK(!t.malformed);
  CHECK(!t.diagnostics.empty());
  REQUIRE(t.nodes.size() == 2);
  CHECK(t.nodes[0].field.member_units == std::vector<int>{0, 1});
  CHECK(t.nodes[1].field.role == "value");
  CHECK(t.nodes[1].parent == 0);
}

TEST_CASE("children are ordered by head reading rank regardless of label order") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(3);
  const int kvp = ls.index_of("inter-kvp");
  UnifiedLabels ul{{1, 1, 1}, {kvp, 0, kvp}};  // root at unit 1, children 0 and 2
  const Forest f = forest_from_labels(d, ul, ls);
  const auto& nodes = f.trees[0].nodes;
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[0].field.head_unit == 1);
  CHECK(nodes[0].children == std::vector<int>{1, 2});
  CHECK(nodes[1].field.head_unit == 0);  // preorder: first child first
  CHECK(nodes[2].field.head_unit == 2);
}

TEST_CASE("deep nesting round trips") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  const Document d = grid_doc(8);
  const int kvp = ls.index_of("inter-kvp");
  const int cg = ls.index_of("inter-cg");
  const int ikey = ls.index_of("intra-key");
  const int ival = ls.index_of("intra-value");
  // key{0,1} -> value{2,3} -> nested key{4} -> value{5}; cgt{6} -> cf{7}
  Document dd = d;
  dd.units[7].kind = UnitKind::ChoiceWidget;
  UnifiedLabels ul{{0, 0, 0, 2, 2, 4, 6, 6},
                   {0, ikey, kvp, ival, kvp, kvp, 0, cg}};
  const Forest f = forest_from_labels(dd, ul, ls);
  REQUIRE(f.trees.size() == 2);
  CHECK(tree_kind(f.trees[0]) == "kvp");
  CHECK(tree_kind(f.trees[1]) == "choice_group");
  CHECK(f.trees[0].nodes.size() == 4);
  CHECK(f.trees[0].nodes[2].field.role == "key");
  CHECK(f.trees[0].nodes[3].field.role == "value");
  CHECK(labels_from_forest(dd, f, ls) == ul);
}

TEST_CASE("one_hot_scores puts unit mass on labeled parents") {
  const RelationLabelSet ls = RelationLabelSet::default_set();
  UnifiedLabels ul{{0, 0, 1}, {0, ls.index_of("inter-kvp"), ls.index_of("intra-value")}};
  const ScoredRelationGraph g = one_hot_scores(ul, ls);
  REQUIRE(g.n == 3);
  for (int j = 0; j < g.n; ++j) {
    double col = 0;
    for (int i = 0; i < g.n; ++i) col += g.at_r(i, j);
    CHECK(col == 1.0);
    CHECK(g.at_r(ul.parent[j], j) == 1.0);
    CHECK(g.at_c(ul.parent[j], j) == ul.rel_type[j]);
    CHECK(g.at_c(j, j) == (ul.parent[j] == j ? ul.rel_type[j] : ls.root_index()));
  }
}
