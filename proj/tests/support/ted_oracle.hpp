#pragma once

#include <vector>

#include "formtree/metrics.hpp"

// Exhaustive tree-edit-distance oracle. Enumerates every valid Tai mapping
// (injective, ancestor-preserving, sibling-order-preserving) between the two
// node sets; cost = unmapped nodes on both sides + relabels. This is the
// textbook definition of edit distance via mappings, independent of the
// Zhang-Shasha dynamic program it checks. Intended for trees of <= 6 nodes.
namespace ftcheck {

struct TaiEnv {
  const formtree::metrics::OrderedTree* a;
  const formtree::metrics::OrderedTree* b;
  std::vector<std::vector<char>> anc_a, anc_b;  // [x][y]: x proper ancestor of y
  std::vector<int> pre_a, pre_b;                // preorder rank per node id
};

inline void fill_anc(const formtree::metrics::OrderedTree& t,
                     std::vector<std::vector<char>>& anc, std::vector<int>& pre) {
  const int n = t.size();
  anc.assign(n, std::vector<char>(n, 0));
  pre.assign(n, 0);
  int counter = 0;
  // iterative preorder carrying the ancestor stack
  std::vector<std::pair<int, int>> stack{{0, 0}};  // node, next child slot
  std::vector<int> path;
  while (!stack.empty()) {
    auto& [node, slot] = stack.back();
    if (slot == 0) {
      for (int up : path) anc[up][node] = 1;
      pre[node] = counter++;
      path.push_back(node);
    }
    if (slot < static_cast<int>(t.nodes[node].children.size())) {
      const int child = t.nodes[node].children[slot++];
      stack.push_back({child, 0});
    } else {
      path.pop_back();
      stack.pop_back();
    }
  }
}

inline bool pair_consistent(const TaiEnv& e, int a1, int b1, int a2, int b2) {
  if (e.anc_a[a1][a2] != e.anc_b[b1][b2]) return false;
  if (e.anc_a[a2][a1] != e.anc_b[b2][b1]) return false;
  if (!e.anc_a[a1][a2] && !e.anc_a[a2][a1])
    return (e.pre_a[a1] < e.pre_a[a2]) == (e.pre_b[b1] < e.pre_b[b2]);
  return true;
}

inline void tai_rec(const TaiEnv& e, int next_a, std::vector<std::pair<int, int>>& chosen,
                    std::vector<char>& used_b, int relabels, int& best) {
  const int n1 = e.a->size(), n2 = e.b->size();
  if (next_a == n1) {
    const int m = static_cast<int>(chosen.size());
    const int cost = (n1 - m) + (n2 - m) + relabels;
    if (cost < best) best = cost;
    return;
  }
  tai_rec(e, next_a + 1, chosen, used_b, relabels, best);  // leave next_a unmapped
  for (int b = 0; b < n2; ++b) {
    if (used_b[b]) continue;
    bool ok = true;
    for (const auto& [a2, b2] : chosen)
      if (!pair_consistent(e, next_a, b, a2, b2)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    used_b[b] = 1;
    chosen.push_back({next_a, b});
    const int rel = e.a->nodes[next_a].label == e.b->nodes[b].label ? 0 : 1;
    tai_rec(e, next_a + 1, chosen, used_b, relabels + rel, best);
    chosen.pop_back();
    used_b[b] = 0;
  }
}

inline int brute_force_ted(const formtree::metrics::OrderedTree& a,
                           const formtree::metrics::OrderedTree& b) {
  TaiEnv e{&a, &b, {}, {}, {}, {}};
  fill_anc(a, e.anc_a, e.pre_a);
  fill_anc(b, e.anc_b, e.pre_b);
  int best = a.size() + b.size();
  std::vector<std::pair<int, int>> chosen;
  std::vector<char> used_b(b.size(), 0);
  tai_rec(e, 0, chosen, used_b, 0, best);
  return best;
}

}  // namespace ftcheck
