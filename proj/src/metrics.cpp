#include "formtree/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace formtree::metrics {

using doc::Field;
using doc::HierNode;

namespace {

std::set<int> forest_units(const Forest& f) {
  std::set<int> s;
  for (const HierTree& t : f.trees)
    for (const HierNode& n : t.nodes)
      for (int m : n.field.member_units) s.insert(m);
  return s;
}

void check_same_units(const Forest& pred, const Forest& gt) {
  if (forest_units(pred) != forest_units(gt))
    throw std::invalid_argument(
        "forests cover different unit sets; cross-document comparison");
}

}  // namespace

MatchReport field_f1(const Forest& pred, const Forest& gt) {
  check_same_units(pred, gt);
  // a field is keyed by its member set; sets are disjoint within a forest
  auto collect = [](const Forest& f) {
    std::map<std::vector<int>, std::string> out;  // sorted members -> role
    for (const HierTree& t : f.trees)
      for (const HierNode& n : t.nodes) {
        std::vector<int> ms = n.field.member_units;
        std::sort(ms.begin(), ms.end());
        out.emplace(std::move(ms), n.field.role);
      }
    return out;
  };
  const auto p = collect(pred), g = collect(gt);
  MatchReport r;
  for (const auto& [ms, role] : p) {
    const auto it = g.find(ms);
    const bool hit = it != g.end() && it->second == role;
    ++(hit ? r.per_class[role].tp : r.per_class[role].fp);
    ++(hit ? r.micro.tp : r.micro.fp);
  }
  for (const auto& [ms, role] : g) {
    const auto it = p.find(ms);
    if (it != p.end() && it->second == role) continue;
    ++r.per_class[role].fn;
    ++r.micro.fn;
  }
  return r;
}

MatchReport tree_f1(const Forest& pred, const Forest& gt) {
  check_same_units(pred, gt);
  MatchReport r;
  std::vector<char> gt_used(gt.trees.size(), 0);
  for (const HierTree& pt : pred.trees) {
    bool hit = false;
    for (std::size_t i = 0; i < gt.trees.size() && !hit; ++i) {
      if (gt_used[i] || !doc::trees_equal(pt, gt.trees[i])) continue;
      gt_used[i] = 1;
      hit = true;
    }
    const std::string kind = doc::tree_kind(pt);
    ++(hit ? r.per_class[kind].tp : r.per_class[kind].fp);
    ++(hit ? r.micro.tp : r.micro.fp);
  }
  for (std::size_t i = 0; i < gt.trees.size(); ++i) {
    if (gt_used[i]) continue;
    ++r.per_class[doc::tree_kind(gt.trees[i])].fn;
    ++r.micro.fn;
  }
  return r;
}

namespace {

std::string normalize_text(const Document& d, const Field& f) {
  std::string out;
  bool pending_space = false;
  for (int m : f.member_units) {
    for (char ch : d.units.at(m).text) {
      if (std::isspace(static_cast<unsigned char>(ch))) {
        pending_space = !out.empty();
        continue;
      }
      if (pending_space) {
        out += ' ';
        pending_space = false;
      }
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    pending_space = !out.empty();
  }
  return out;
}

void view_rec(const Document& d, const HierTree& t, int node, OrderedTree& out, int self) {
  const HierNode& n = t.nodes[node];
  out.nodes[self].label = n.field.role + '\x1f' + normalize_text(d, n.field);
  for (int c : n.children) {
    const int idx = out.size();
    out.nodes.emplace_back();
    out.nodes[self].children.push_back(idx);
    view_rec(d, t, c, out, idx);
  }
}

}  // namespace

OrderedTree tree_view(const Document& d, const HierTree& t) {
  if (t.nodes.empty()) throw std::invalid_argument("empty tree");
  OrderedTree out;
  out.nodes.emplace_back();
  view_rec(d, t, 0, out, 0);
  return out;
}

namespace {

// postorder flattening for Zhang-Shasha
struct ZsFlat {
  std::vector<const std::string*> label;  // by postorder index
  std::vector<int> lml;                   // leftmost leaf descendant
  std::vector<int> keyroots;              // ascending
};

int zs_flatten_rec(const OrderedTree& t, int node, ZsFlat& f) {
  int first = -1;
  for (int c : t.nodes[node].children) {
    const int leaf = zs_flatten_rec(t, c, f);
    if (first < 0) first = leaf;
  }
  const int self = static_cast<int>(f.label.size());
  f.label.push_back(&t.nodes[node].label);
  f.lml.push_back(first < 0 ? self : first);
  return f.lml.back();
}

ZsFlat zs_flatten(const OrderedTree& t) {
  ZsFlat f;
  zs_flatten_rec(t, 0, f);
  const int n = static_cast<int>(f.label.size());
  std::map<int, int> last_for_lml;  // lml value -> highest postorder node
  for (int i = 0; i < n; ++i) last_for_lml[f.lml[i]] = i;
  for (const auto& [lml, node] : last_for_lml) f.keyroots.push_back(node);
  std::sort(f.keyroots.begin(), f.keyroots.end());
  return f;
}

}  // namespace

int tree_edit_distance(const OrderedTree& a, const OrderedTree& b) {
  if (a.nodes.empty() || b.nodes.empty()) throw std::invalid_argument("empty tree");
  const ZsFlat fa = zs_flatten(a), fb = zs_flatten(b);
  const int n1 = static_cast<int>(fa.label.size()), n2 = static_cast<int>(fb.label.size());
  std::vector<std::vector<int>> td(n1, std::vector<int>(n2, 0));
  std::vector<std::vector<int>> fd(n1 + 1, std::vector<int>(n2 + 1, 0));

  for (int ki : fa.keyroots) {
    for (int kj : fb.keyroots) {
      const int li = fa.lml[ki], lj = fb.lml[kj];
      fd[0][0] = 0;
      for (int i1 = li; i1 <= ki; ++i1) fd[i1 - li + 1][0] = fd[i1 - li][0] + 1;
      for (int j1 = lj; j1 <= kj; ++j1) fd[0][j1 - lj + 1] = fd[0][j1 - lj] + 1;
      for (int i1 = li; i1 <= ki; ++i1) {
        const int di = i1 - li + 1;
        for (int j1 = lj; j1 <= kj; ++j1) {
          const int dj = j1 - lj + 1;
          if (fa.lml[i1] == li && fb.lml[j1] == lj) {
            const int relabel = *fa.label[i1] == *fb.label[j1] ? 0 : 1;
            fd[di][dj] = std::min({fd[di - 1][dj] + 1, fd[di][dj - 1] + 1,
                                   fd[di - 1][dj - 1] + relabel});
            td[i1][j1] = fd[di][dj];
          } else {
            fd[di][dj] = std::min({fd[di - 1][dj] + 1, fd[di][dj - 1] + 1,
                                   fd[fa.lml[i1] - li][fb.lml[j1] - lj] + td[i1][j1]});
          }
        }
      }
    }
  }
  return td[n1 - 1][n2 - 1];
}

double teds_views(const OrderedTree& a, const OrderedTree& b) {
  const int ted = tree_edit_distance(a, b);
  return 1.0 - static_cast<double>(ted) / std::max(a.size(), b.size());
}

double teds(const Document& d, const HierTree& pred, const HierTree& gt) {
  return teds_views(tree_view(d, pred), tree_view(d, gt));
}

CorpusReport corpus_eval(const std::vector<Forest>& pred, const std::vector<Forest>& gt,
                         const std::vector<Document>& docs) {
  if (pred.size() != gt.size() || gt.size() != docs.size())
    throw std::invalid_argument("prediction/ground-truth/document counts differ");
  CorpusReport r;
  r.n_docs = static_cast<int>(docs.size());
  std::map<std::string, double> teds_sum;
  double all_sum = 0;
  int all_n = 0;

  auto merge = [](MatchReport& into, const MatchReport& from) {
    for (const auto& [k, v] : from.per_class) {
      into.per_class[k].tp += v.tp;
      into.per_class[k].fp += v.fp;
      into.per_class[k].fn += v.fn;
    }
    into.micro.tp += from.micro.tp;
    into.micro.fp += from.micro.fp;
    into.micro.fn += from.micro.fn;
  };

  for (std::size_t di = 0; di < docs.size(); ++di) {
    merge(r.field, field_f1(pred[di], gt[di]));
    merge(r.tree, tree_f1(pred[di], gt[di]));

    const auto& pt = pred[di].trees;
    const auto& gw = gt[di].trees;
    std::vector<std::vector<double>> sim(pt.size(), std::vector<double>(gw.size()));
    for (std::size_t i = 0; i < pt.size(); ++i)
      for (std::size_t j = 0; j < gw.size(); ++j) sim[i][j] = teds(docs[di], pt[i], gw[j]);

    std::vector<char> pu(pt.size(), 0), gu(gw.size(), 0);
    std::vector<double> gt_score(gw.size(), 0.0);
    for (std::size_t step = 0; step < std::min(pt.size(), gw.size()); ++step) {
      double best = -1;
      std::size_t bi = 0, bj = 0;
      for (std::size_t i = 0; i < pt.size(); ++i) {
        if (pu[i]) continue;
        for (std::size_t j = 0; j < gw.size(); ++j) {
          if (gu[j] || sim[i][j] <= best) continue;
          best = sim[i][j];
          bi = i;
          bj = j;
        }
      }
      pu[bi] = 1;
      gu[bj] = 1;
      gt_score[bj] = best;
    }
    for (std::size_t j = 0; j < gw.size(); ++j) {
      const std::string kind = doc::tree_kind(gw[j]);
      teds_sum[kind] += gt_score[j];
      ++r.gt_trees_by_kind[kind];
      all_sum += gt_score[j];
      ++all_n;
    }
  }
  for (const auto& [kind, sum] : teds_sum)
    r.teds_by_kind[kind] = sum / r.gt_trees_by_kind[kind];
  r.mean_teds = all_n ? all_sum / all_n : 0.0;
  return r;
}

std::string report_json(const CorpusReport& r) {
  nlohmann::json j;
  j["n_docs"] = r.n_docs;
  j["mean_teds"] = r.mean_teds;
  auto match = [](const MatchReport& m) {
    nlohmann::json out;
    out["micro"] = {{"tp", m.micro.tp},
                    {"fp", m.micro.fp},
                    {"fn", m.micro.fn},
                    {"precision", m.micro.precision()},
                    {"recall", m.micro.recall()},
                    {"f1", m.micro.f1()}};
    out["macro_f1"] = m.macro_f1();
    for (const auto& [k, v] : m.per_class)
      out["per_class"][k] = {{"tp", v.tp}, {"fp", v.fp}, {"fn", v.fn}, {"f1", v.f1()}};
    return out;
  };
  j["field"] = match(r.field);
  j["tree"] = match(r.tree);
  for (const auto& [k, v] : r.teds_by_kind)
    j["teds"][k] = {{"mean", v}, {"gt_trees", r.gt_trees_by_kind.at(k)}};
  return j.dump(1);
}

std::string report_table(const CorpusReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s\n", "metric", "tp", "fp", "fn", "f1");
  os << buf;
  auto row = [&](const std::string& name, const ClassScore& s) {
    std::snprintf(buf, sizeof buf, "%-14s %8d %8d %8d %8.4f\n", name.c_str(), s.tp, s.fp,
                  s.fn, s.f1());
    os << buf;
  };
  row("field (micro)", r.field.micro);
  for (const auto& [k, v] : r.field.per_class) row("  " + k, v);
  row("tree (micro)", r.tree.micro);
  for (const auto& [k, v] : r.tree.per_class) row("  " + k, v);
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8.4f\n", "teds (mean)", "", "", "",
                r.mean_teds);
  os << buf;
  for (const auto& [k, v] : r.teds_by_kind) {
    std::snprintf(buf, sizeof buf, "  %-12s %8d %8s %8s %8.4f\n", k.c_str(),
                  r.gt_trees_by_kind.at(k), "", "", v);
    os << buf;
  }
  return os.str();
}

}  // namespace formtree::metrics
