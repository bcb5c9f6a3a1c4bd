#include "formtree/arbor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace formtree::arbor {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFloor = 1e-12;
}  // namespace

RootedScoreGraph build_rooted_graph(const std::vector<double>& r, int n, WeightMode mode) {
  if (n < 0 || r.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("score matrix is not n x n");
  RootedScoreGraph g;
  g.n = n;
  g.mode = mode;
  const int m = n + 1;
  g.w.assign(static_cast<std::size_t>(m) * m, -kInf);
  auto weigh = [&](double p) {
    p = std::max(p, kFloor);
    return mode == WeightMode::LogProb ? std::log(p) : p;
  };
  for (int j = 0; j < n; ++j) {
    g.w[static_cast<std::size_t>(0) * m + (j + 1)] = weigh(r[static_cast<std::size_t>(j) * n + j]);
    for (int i = 0; i < n; ++i)
      if (i != j)
        g.w[static_cast<std::size_t>(i + 1) * m + (j + 1)] =
            weigh(r[static_cast<std::size_t>(i) * n + j]);
  }
  return g;
}

namespace {

// Chu-Liu/Edmonds on a dense matrix; node 0 is the root. Returns the chosen
// in-edge source per node (index 0 unused). Ascending argmax scan makes ties
// prefer the root, then lower indices.
std::vector<int> cle(std::vector<std::vector<double>> w) {
  const int m = static_cast<int>(w.size());
  std::vector<int> in(m, -1);
  for (int v = 1; v < m; ++v) {
    double best = -kInf;
    for (int i = 0; i < m; ++i) {
      if (i == v || w[i][v] <= best) continue;
      best = w[i][v];
      in[v] = i;
    }
    if (in[v] < 0) throw std::logic_error("node unreachable from root");
  }

  std::vector<int> cyc;
  {
    std::vector<int> color(m, 0);  // 0 new, 1 on path, 2 done
    for (int s = 1; s < m && cyc.empty(); ++s) {
      if (color[s]) continue;
      std::vector<int> path;
      int u = s;
      while (u != 0 && color[u] == 0) {
        color[u] = 1;
        path.push_back(u);
        u = in[u];
      }
      if (u != 0 && color[u] == 1) {
        int v = u;
        do {
          cyc.push_back(v);
          v = in[v];
        } while (v != u);
      }
      for (int x : path) color[x] = 2;
    }
  }
  if (cyc.empty()) return in;

  std::vector<char> inc(m, 0);
  for (int v : cyc) inc[v] = 1;

  // contract: supernode takes the slot of the smallest cycle member
  std::vector<int> nid(m, -1);
  int next = 0, cnode = -1;
  for (int v = 0; v < m; ++v) {
    if (inc[v]) {
      if (cnode < 0) cnode = next++;
      nid[v] = cnode;
    } else {
      nid[v] = next++;
    }
  }
  const int m2 = next;
  std::vector<int> old_of(m2, -1);
  for (int v = 0; v < m; ++v)
    if (!inc[v]) old_of[nid[v]] = v;

  std::vector<std::vector<double>> w2(m2, std::vector<double>(m2, -kInf));
  std::vector<int> entry(m2, -1);  // edge u'->supernode lands on this cycle node
  std::vector<int> exitv(m2, -1);  // edge supernode->v' leaves from this cycle node
  for (int u = 0; u < m; ++u) {
    for (int v = 1; v < m; ++v) {
      if (u == v || w[u][v] == -kInf) continue;
      const int u2 = nid[u], v2 = nid[v];
      if (u2 == v2) continue;
      if (v2 == cnode) {
        const double adj = w[u][v] - w[in[v]][v];
        if (adj > w2[u2][cnode]) {
          w2[u2][cnode] = adj;
          entry[u2] = v;
        }
      } else if (u2 == cnode) {
        if (w[u][v] > w2[cnode][v2]) {
          w2[cnode][v2] = w[u][v];
          exitv[v2] = u;
        }
      } else if (w[u][v] > w2[u2][v2]) {
        w2[u2][v2] = w[u][v];
      }
    }
  }

  const std::vector<int> par2 = cle(std::move(w2));

  std::vector<int> out(m, -1);
  for (int v = 1; v < m; ++v) {
    if (inc[v]) continue;
    const int p2 = par2[nid[v]];
    out[v] = p2 == cnode ? exitv[nid[v]] : old_of[p2];
  }
  const int p2c = par2[cnode];
  const int vstar = entry[p2c];
  out[vstar] = old_of[p2c];
  for (int v : cyc)
    if (v != vstar) out[v] = in[v];
  return out;
}

}  // namespace

std::vector<int> max_arborescence(const RootedScoreGraph& g) {
  const int m = g.n + 1;
  std::vector<std::vector<double>> w(m, std::vector<double>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) w[i][j] = g.w[static_cast<std::size_t>(i) * m + j];
  const std::vector<int> par0 = cle(std::move(w));
  std::vector<int> par(g.n);
  for (int j = 0; j < g.n; ++j) par[j] = par0[j + 1] == 0 ? j : par0[j + 1] - 1;
  return par;
}

double arborescence_weight(const RootedScoreGraph& g, const std::vector<int>& par) {
  if (static_cast<int>(par.size()) != g.n)
    throw std::invalid_argument("parent array size mismatch");
  double s = 0;
  for (int j = 0; j < g.n; ++j) s += g.at(par[j] == j ? 0 : par[j] + 1, j + 1);
  return s;
}

UnitForest split_subtrees(const std::vector<int>& parents) {
  const int n = static_cast<int>(parents.size());
  UnitForest f;
  f.parent = parents;
  f.tree_of.assign(n, -1);
  f.depth.assign(n, -1);
  for (int j = 0; j < n; ++j)
    if (parents[j] < 0 || parents[j] >= n)
      throw std::invalid_argument("parent index out of range");

  for (int j = 0; j < n; ++j) {
    // walk to the root, then unwind depths
    std::vector<int> chain;
    int cur = j;
    while (f.depth[cur] < 0 && parents[cur] != cur) {
      chain.push_back(cur);
      cur = parents[cur];
      if (static_cast<int>(chain.size()) > n)
        throw std::invalid_argument("parent array contains a cycle");
    }
    if (f.depth[cur] < 0) f.depth[cur] = 0;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
      f.depth[*it] = f.depth[parents[*it]] + 1;
  }

  for (int j = 0; j < n; ++j) {
    if (parents[j] != j) continue;
    f.tree_of[j] = static_cast<int>(f.trees.size());
    f.trees.emplace_back();
  }
  for (int j = 0; j < n; ++j) {
    int cur = j;
    while (parents[cur] != cur) cur = parents[cur];
    f.tree_of[j] = f.tree_of[cur];
    f.trees[f.tree_of[j]].push_back(j);
  }
  return f;
}

doc::HierTree assemble_hierarchy(const doc::Document& d, const doc::UnifiedLabels& ul,
                                 const doc::RelationLabelSet& labels, int root_unit) {
  if (root_unit < 0 || root_unit >= d.n_units())
    throw std::invalid_argument("root unit out of range");
  if (ul.parent.at(root_unit) != root_unit)
    throw std::invalid_argument("unit " + std::to_string(root_unit) + " is not a tree root");
  const doc::Forest f = doc::forest_from_labels(d, ul, labels, doc::AssembleMode::Tolerant);
  for (const doc::HierTree& t : f.trees)
    for (const doc::HierNode& n : t.nodes)
      for (int m : n.field.member_units)
        if (m == root_unit) return t;
  throw std::logic_error("root unit missing from assembled forest");
}

doc::Forest decode(const doc::Document& d, const doc::ScoredRelationGraph& g,
                   const doc::RelationLabelSet& labels, WeightMode mode) {
  if (g.n != d.n_units())
    throw std::invalid_argument("score matrix does not match document size");
  const RootedScoreGraph rg = build_rooted_graph(g.r, g.n, mode);
  doc::UnifiedLabels ul;
  ul.parent = max_arborescence(rg);
  ul.rel_type.resize(g.n);

  int fallback = -1;
  for (int t = 0; t < labels.size() && fallback < 0; ++t)
    if (labels.category(t) != doc::RelCategory::Root) fallback = t;

  for (int j = 0; j < g.n; ++j) {
    if (ul.parent[j] == j) {
      ul.rel_type[j] = labels.root_index();
      continue;
    }
    int t = g.at_c(ul.parent[j], j);
    if (t < 0 || t >= labels.size() || labels.category(t) == doc::RelCategory::Root)
      t = fallback;
    if (t < 0) throw std::invalid_argument("label set has no non-root types for decoded edges");
    ul.rel_type[j] = t;
  }
  return doc::forest_from_labels(d, ul, labels, doc::AssembleMode::Tolerant);
}

}  // namespace formtree::arbor
