#pragma once

#include <limits>
#include <vector>

// Exhaustive arborescence search, the oracle for Chu-Liu/Edmonds. Enumerates
// every parent assignment (par[j] in {root} u units\{j}), keeps acyclic ones,
// and returns the maximum total weight. Written against the graph contract
// only; O(N^N), intended for N <= 7.
namespace ftcheck {

struct BruteArb {
  double best = -std::numeric_limits<double>::infinity();
  long long count = 0;  // acyclic assignments seen
};

// w is the (n+1)x(n+1) dense weight matrix, node 0 the root, -inf = no edge.
inline BruteArb brute_force_arborescence(const std::vector<double>& w, int n) {
  BruteArb out;
  if (n == 0) {
    out.best = 0;
    out.count = 1;
    return out;
  }
  const int stride = n + 1;
  std::vector<int> par(n, 0);  // node ids: 0 root, unit j -> j+1
  while (true) {
    // acyclicity: walk each unit to the root
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      int cur = j, steps = 0;
      while (par[cur] != 0) {
        cur = par[cur] - 1;
        if (++steps > n) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += w[par[j] * stride + (j + 1)];
      ++out.count;
      if (s > out.best) out.best = s;
    }
    // next assignment in mixed radix; digit j skips the self edge
    int j = 0;
    for (; j < n; ++j) {
      ++par[j];
      if (par[j] == j + 1) ++par[j];  // never own parent
      if (par[j] <= n) break;
      par[j] = 0;
    }
    if (j == n) break;
  }
  return out;
}

}  // namespace ftcheck
