#pragma once

#include <vector>

#include "formtree/doc_model.hpp"

namespace formtree::doc {

// Dense parent-prediction scores for one document. r[i*n+j] is the probability
// that unit i is the parent of unit j (i==j encodes "j is a tree root"), so
// each column of R sums to 1. c[i*n+j] is the argmax relation type for the
// edge i->j; only the entries on chosen edges are ever consumed.
struct ScoredRelationGraph {
  int n = 0;
  std::vector<double> r;
  std::vector<int> c;

  double& at_r(int i, int j) { return r[static_cast<std::size_t>(i) * n + j]; }
  double at_r(int i, int j) const { return r[static_cast<std::size_t>(i) * n + j]; }
  int& at_c(int i, int j) { return c[static_cast<std::size_t>(i) * n + j]; }
  int at_c(int i, int j) const { return c[static_cast<std::size_t>(i) * n + j]; }
};

// Lifts ground-truth labels to a deterministic scored graph: probability 1 on
// the labeled parent, 0 elsewhere. Decoding it must reproduce the labels.
inline ScoredRelationGraph one_hot_scores(const UnifiedLabels& ul,
                                          const RelationLabelSet& labels) {
  ScoredRelationGraph g;
  g.n = static_cast<int>(ul.parent.size());
  g.r.assign(static_cast<std::size_t>(g.n) * g.n, 0.0);
  g.c.assign(static_cast<std::size_t>(g.n) * g.n, 0);
  for (int j = 0; j < g.n; ++j) {
    g.at_r(ul.parent[j], j) = 1.0;
    g.at_c(ul.parent[j], j) = ul.rel_type[j];
    if (ul.parent[j] != j) g.at_c(j, j) = labels.root_index();
  }
  return g;
}

}  // namespace formtree::doc
