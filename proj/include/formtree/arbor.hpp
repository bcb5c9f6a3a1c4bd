#pragma once

#include <vector>

#include "formtree/doc_model.hpp"
#include "formtree/relation_graph.hpp"

namespace formtree::arbor {

// Whether arborescence weights are log-probabilities (score = joint assignment
// log-likelihood) or raw probabilities summed directly.
enum class WeightMode { LogProb, Prob };

// (n+1)-node dense digraph; node 0 is the virtual root, unit j is node j+1.
// Self-loop scores R[j][j] are redirected as root->j edges. No self-loops, no
// edges into the root: those cells hold -infinity.
struct RootedScoreGraph {
  int n = 0;
  WeightMode mode = WeightMode::LogProb;
  std::vector<double> w;  // (n+1)^2 row-major

  double at(int i, int j) const { return w[static_cast<std::size_t>(i) * (n + 1) + j]; }
};

// r is the n x n column-stochastic parent matrix, r[i*n+j] = P(i parent of j).
// Entries are floored at 1e-12 before the log.
RootedScoreGraph build_rooted_graph(const std::vector<double>& r, int n,
                                    WeightMode mode = WeightMode::LogProb);

// Maximum spanning arborescence rooted at the virtual node (Chu-Liu/Edmonds).
// Returns par with par[j] == j where the root edge was chosen, matching the
// unified label convention. Ties prefer root edges, then lower parent index.
std::vector<int> max_arborescence(const RootedScoreGraph& g);

// Total weight of a parent assignment under g, for optimality checks.
double arborescence_weight(const RootedScoreGraph& g, const std::vector<int>& par);

// Unit-level view of a decoded parent array: trees, membership and depths.
// Tree order follows ascending root unit id; depth is 0 at tree roots.
struct UnitForest {
  std::vector<int> parent;
  std::vector<int> tree_of;
  std::vector<int> depth;
  std::vector<std::vector<int>> trees;  // unit ids ascending within each tree
};

UnitForest split_subtrees(const std::vector<int>& parents);

// Builds the hierarchy of the tree rooted at root_unit under the tolerant
// assembly rules (inconsistent chains downgrade the tree, flagged malformed).
doc::HierTree assemble_hierarchy(const doc::Document& d, const doc::UnifiedLabels& ul,
                                 const doc::RelationLabelSet& labels, int root_unit);

// Full pipeline: graph build, arborescence, type attachment, assembly. Total
// for any scores: off-diagonal types claiming "root" fall back to the first
// non-root type, and inconsistent trees are downgraded rather than rejected.
doc::Forest decode(const doc::Document& d, const doc::ScoredRelationGraph& g,
                   const doc::RelationLabelSet& labels,
                   WeightMode mode = WeightMode::LogProb);

}  // namespace formtree::arbor
