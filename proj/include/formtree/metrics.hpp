#pragma once

#include <map>
#include <string>
#include <vector>

#include "formtree/doc_model.hpp"

namespace formtree::metrics {

using doc::Document;
using doc::Forest;
using doc::HierTree;

struct ClassScore {
  int tp = 0, fp = 0, fn = 0;
  double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

struct MatchReport {
  std::map<std::string, ClassScore> per_class;
  ClassScore micro;
  double macro_f1() const {
    if (per_class.empty()) return 0.0;
    double s = 0;
    for (const auto& [k, v] : per_class) s += v.f1();
    return s / static_cast<double>(per_class.size());
  }
};

// A predicted field counts iff role and exact member-unit set match a GT
// field; classes are roles. Forests must cover the same unit set.
MatchReport field_f1(const Forest& pred, const Forest& gt);

// A predicted tree counts iff the entire structure (fields, edges, types) is
// identical; classes are tree kinds.
MatchReport tree_f1(const Forest& pred, const Forest& gt);

// Rooted labeled ordered tree for edit distance; node 0 is the root.
struct OrderedTree {
  struct Node {
    std::string label;
    std::vector<int> children;
  };
  std::vector<Node> nodes;
  int size() const { return static_cast<int>(nodes.size()); }
};

// Node label = role plus the members' text lowercased with whitespace runs
// collapsed; children keep the tree's stored (reading) order.
OrderedTree tree_view(const Document& d, const HierTree& t);

// Exact ordered-tree edit distance, unit costs (Zhang-Shasha).
int tree_edit_distance(const OrderedTree& a, const OrderedTree& b);

// 1 - TED/max(|a|,|b|); trees must be non-empty.
double teds_views(const OrderedTree& a, const OrderedTree& b);
double teds(const Document& d, const HierTree& pred, const HierTree& gt);

struct CorpusReport {
  MatchReport field;
  MatchReport tree;
  std::map<std::string, double> teds_by_kind;  // mean over GT trees of the kind
  std::map<std::string, int> gt_trees_by_kind;
  double mean_teds = 0;  // over all GT trees
  int n_docs = 0;
};

// Documents aligned by index. Per document, predicted trees pair greedily with
// GT trees by maximal TEDS (ties toward lower tree indices); each unmatched GT
// tree scores 0.
CorpusReport corpus_eval(const std::vector<Forest>& pred, const std::vector<Forest>& gt,
                         const std::vector<Document>& docs);

std::string report_json(const CorpusReport& r);
std::string report_table(const CorpusReport& r);

}  // namespace formtree::metrics
