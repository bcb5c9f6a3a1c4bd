#include "formtree/doc_model.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace formtree::doc {

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

const char* unit_kind_name(UnitKind k) {
  switch (k) {
    case UnitKind::TextLine: return "text_line";
    case UnitKind::TextWidget: return "text_widget";
    case UnitKind::ChoiceWidget: return "choice_widget";
  }
  return "text_line";
}

UnitKind unit_kind_from_name(std::string_view s) {
  if (s == "text_line") return UnitKind::TextLine;
  if (s == "text_widget") return UnitKind::TextWidget;
  if (s == "choice_widget") return UnitKind::ChoiceWidget;
  throw std::invalid_argument("unknown unit kind: " + std::string(s));
}

std::vector<std::string> validate_document(const Document& doc) {
  std::vector<std::string> out;
  if (doc.units.empty()) out.push_back("document has no units");
  if (doc.page_width <= 0 || doc.page_height <= 0) out.push_back("non-positive page size");
  for (std::size_t i = 0; i < doc.units.size(); ++i) {
    const BasicUnit& u = doc.units[i];
    if (u.id != static_cast<int>(i)) {
      out.push_back("id density: unit at position " + std::to_string(i) + " has id " +
                    std::to_string(u.id));
    }
    const BBox& b = u.bbox;
    if (b.x1 > b.x2 || b.y1 > b.y2)
      out.push_back("bbox order: unit " + std::to_string(u.id));
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > 1 || b.y2 > 1)
      out.push_back("bbox bounds: unit " + std::to_string(u.id));
  }
  return out;
}

RelationLabelSet RelationLabelSet::from_names(const std::vector<std::string>& names) {
  if (names.empty()) throw std::invalid_argument("relation label set is empty");
  RelationLabelSet ls;
  for (const std::string& n : names) {
    if (std::find(ls.names_.begin(), ls.names_.end(), n) != ls.names_.end())
      throw std::invalid_argument("duplicate relation type: " + n);
    RelCategory cat;
    if (n == "root") {
      cat = RelCategory::Root;
      ls.root_ = static_cast<int>(ls.names_.size());
    } else if (n.rfind("intra-", 0) == 0) {
      cat = RelCategory::IntraField;
    } else if (n.rfind("inter-", 0) == 0) {
      cat = RelCategory::InterField;
    } else {
      throw std::invalid_argument("relation type must be root, intra-* or inter-*: " + n);
    }
    ls.names_.push_back(n);
    ls.cats_.push_back(cat);
  }
  if (ls.root_ < 0) throw std::invalid_argument("relation label set lacks \"root\"");
  return ls;
}

RelationLabelSet RelationLabelSet::default_set() {
  return from_names(
      {"root", "intra-key", "intra-value", "intra-cgt", "intra-cf", "inter-kvp", "inter-cg"});
}

int RelationLabelSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

int RelationLabelSet::index_of(std::string_view name) const {
  const int idx = find(name);
  if (idx < 0) throw std::out_of_range("unknown relation type: " + std::string(name));
  return idx;
}

std::vector<std::string> validate_labels(int n_units, const UnifiedLabels& ul,
                                         const RelationLabelSet& labels) {
  std::vector<std::string> out;
  const std::size_t n = static_cast<std::size_t>(n_units);
  if (ul.parent.size() != n || ul.rel_type.size() != n) {
    out.push_back("label arrays sized " + std::to_string(ul.parent.size()) + "/" +
                  std::to_string(ul.rel_type.size()) + " for " + std::to_string(n_units) +
                  " units");
    return out;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (ul.parent[j] < 0 || ul.parent[j] >= n_units)
      out.push_back("parent of unit " + std::to_string(j) + " out of range");
    if (ul.rel_type[j] < 0 || ul.rel_type[j] >= labels.size())
      out.push_back("rel_type of unit " + std::to_string(j) + " out of range");
  }
  if (!out.empty()) return out;
  for (std::size_t j = 0; j < n; ++j) {
    const bool self = ul.parent[j] == static_cast<int>(j);
    const bool root = ul.rel_type[j] == labels.root_index();
    if (self != root)
      out.push_back("unit " + std::to_string(j) + ": self-parent and root type must coincide");
  }
  // cycle check over the non-self edges
  std::vector<int> color(n, 0);  // 0 new, 1 on path, 2 done
  for (std::size_t s = 0; s < n; ++s) {
    if (color[s]) continue;
    std::vector<int> path;
    int cur = static_cast<int>(s);
    while (color[cur] == 0) {
      color[cur] = 1;
      path.push_back(cur);
      if (ul.parent[cur] == cur) break;
      cur = ul.parent[cur];
      if (color[cur] == 1) {
        out.push_back("cycle through unit " + std::to_string(cur));
        break;
      }
    }
    for (int u : path) color[u] = 2;
  }
  return out;
}

std::vector<int> reading_order(const Document& doc) {
  const int n = doc.n_units();
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (n == 0) return ids;

  std::vector<double> heights(n);
  for (int i = 0; i < n; ++i) heights[i] = doc.units[i].bbox.height();
  std::vector<double> sorted_h = heights;
  std::sort(sorted_h.begin(), sorted_h.end());
  const double tol = 0.5 * sorted_h[n / 2];

  std::vector<int> by_y = ids;
  std::sort(by_y.begin(), by_y.end(), [&](int a, int b) {
    const double ya = doc.units[a].bbox.cy(), yb = doc.units[b].bbox.cy();
    return ya != yb ? ya < yb : a < b;
  });
  std::vector<int> row(n, 0);
  int cur_row = -1;
  double anchor = 0;
  for (int id : by_y) {
    const double yc = doc.units[id].bbox.cy();
    if (cur_row < 0 || yc > anchor + tol) {
      ++cur_row;
      anchor = yc;
    }
    row[id] = cur_row;
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] < row[b];
    const BBox& ba = doc.units[a].bbox;
    const BBox& bb = doc.units[b].bbox;
    if (ba.x1 != bb.x1) return ba.x1 < bb.x1;
    if (ba.y1 != bb.y1) return ba.y1 < bb.y1;
    return a < b;
  });
  return ids;
}

std::vector<int> reading_rank(const Document& doc) {
  const std::vector<int> order = reading_order(doc);
  std::vector<int> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
  return rank;
}

int HierTree::n_units() const {
  int n = 0;
  for (const HierNode& node : nodes) n += static_cast<int>(node.field.member_units.size());
  return n;
}

bool trees_equal(const HierTree& a, const HierTree& b) { return a.nodes == b.nodes; }

bool forests_equal(const Forest& a, const Forest& b) {
  if (a.trees.size() != b.trees.size()) return false;
  for (std::size_t i = 0; i < a.trees.size(); ++i)
    if (!trees_equal(a.trees[i], b.trees[i])) return false;
  return true;
}

std::string tree_kind(const HierTree& t) {
  if (t.nodes.empty()) return "unknown";
  const std::string& role = t.nodes[0].field.role;
  if (role == "key") return "kvp";
  if (role == "cgt" || role == "cf") return "choice_group";
  if (role == "text") return "text";
  if (role == "unknown") return "unknown";
  return "entity";
}

UnifiedLabels labels_from_forest(const Document& doc, const Forest& forest,
                                 const RelationLabelSet& labels) {
  const int n = doc.n_units();
  const std::vector<int> rank = reading_rank(doc);
  UnifiedLabels ul;
  ul.parent.resize(n);
  ul.rel_type.assign(n, labels.root_index());
  for (int j = 0; j < n; ++j) ul.parent[j] = j;

  std::vector<int> covered(n, 0);
  auto sorted_members = [&](const Field& f) {
    std::vector<int> ms = f.member_units;
    for (int m : ms)
      if (m < 0 || m >= n)
        throw std::invalid_argument("field references unknown unit id " + std::to_string(m));
    std::sort(ms.begin(), ms.end(), [&](int a, int b) { return rank[a] < rank[b]; });
    return ms;
  };

  for (const HierTree& tree : forest.trees) {
    for (const HierNode& node : tree.nodes) {
      const std::vector<int> ms = sorted_members(node.field);
      if (ms.empty()) throw std::invalid_argument("field with no member units");
      for (int m : ms) {
        if (covered[m]++)
          throw std::invalid_argument("unit " + std::to_string(m) + " appears in two fields");
      }
      if (ms.size() > 1) {
        const int intra = labels.find("intra-" + node.field.role);
        if (intra < 0)
          throw std::invalid_argument("no intra type for multi-unit field of role " +
                                      node.field.role);
        for (std::size_t t = 1; t < ms.size(); ++t) {
          ul.parent[ms[t]] = ms[t - 1];
          ul.rel_type[ms[t]] = intra;
        }
      }
      const int head = ms[0];
      if (node.parent < 0) {
        ul.parent[head] = head;
        ul.rel_type[head] = labels.root_index();
      } else {
        if (node.rel_type < 0 || node.rel_type >= labels.size())
          throw std::invalid_argument("tree edge with invalid relation type");
        if (node.rel_type == labels.root_index())
          throw std::invalid_argument("non-root tree node typed root");
        const std::vector<int> pm = sorted_members(tree.nodes.at(node.parent).field);
        ul.parent[head] = pm[0];
        ul.rel_type[head] = node.rel_type;
      }
    }
  }
  for (int j = 0; j < n; ++j)
    if (!covered[j])
      throw std::invalid_argument("unit " + std::to_string(j) + " not covered by any field");
  return ul;
}

namespace {

struct UnionFind {
  std::vector<int> up;
  explicit UnionFind(int n) : up(n) { std::iota(up.begin(), up.end(), 0); }
  int find(int x) {
    while (up[x] != x) x = up[x] = up[up[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) up[std::max(a, b)] = std::min(a, b);  // lowest id wins: deterministic
  }
};

struct FieldDraft {
  std::vector<int> members;  // reading order
  int head = -1;
  std::string role;
  int parent = -1;    // draft index
  int rel_type = -1;  // incoming edge type; root at tree root
  std::vector<int> children;
  bool contains_choice = false;
};

// Preorder emission with children already sorted.
void emit_preorder(const std::vector<FieldDraft>& drafts, int draft_idx, int parent_node,
                   HierTree& out) {
  const FieldDraft& d = drafts[draft_idx];
  HierNode node;
  node.field.role = d.role;
  node.field.member_units = d.members;
  node.field.head_unit = d.head;
  node.parent = parent_node;
  node.rel_type = d.rel_type;
  const int self = static_cast<int>(out.nodes.size());
  out.nodes.push_back(std::move(node));
  if (parent_node >= 0) out.nodes[parent_node].children.push_back(self);
  for (int c : d.children) emit_preorder(drafts, c, self, out);
}

}  // namespace

Forest forest_from_labels(const Document& doc, const UnifiedLabels& ul,
                          const RelationLabelSet& labels, AssembleMode mode) {
  const int n = doc.n_units();
  {
    const std::vector<std::string> bad = validate_labels(n, ul, labels);
    if (!bad.empty()) throw std::invalid_argument("invalid labels: " + join(bad, "; "));
  }
  const std::vector<int> rank = reading_rank(doc);
  const int root_type = labels.root_index();

  auto is_intra = [&](int t) { return labels.category(t) == RelCategory::IntraField; };

  // unit-level trees
  std::vector<std::vector<int>> child_units(n);
  std::vector<int> tree_of(n, -1);
  std::vector<int> tree_roots;
  for (int j = 0; j < n; ++j) {
    if (ul.parent[j] == j)
      tree_roots.push_back(j);
    else
      child_units[ul.parent[j]].push_back(j);
  }
  std::sort(tree_roots.begin(), tree_roots.end(), [&](int a, int b) { return rank[a] < rank[b]; });
  for (std::size_t t = 0; t < tree_roots.size(); ++t) {
    std::vector<int> stack{tree_roots[t]};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      tree_of[u] = static_cast<int>(t);
      for (int c : child_units[u]) stack.push_back(c);
    }
  }

  // intra components = fields
  UnionFind uf(n);
  for (int j = 0; j < n; ++j)
    if (ul.parent[j] != j && is_intra(ul.rel_type[j])) uf.unite(ul.parent[j], j);

  std::map<int, std::vector<int>> comp_members;
  for (int j = 0; j < n; ++j) comp_members[uf.find(j)].push_back(j);

  struct CompInfo {
    std::vector<int> members;
    std::vector<int> heads;      // incoming edge not intra
    std::vector<int> intra_types;
    bool contains_choice = false;
  };
  std::map<int, CompInfo> comps;
  for (auto& [key, members] : comp_members) {
    CompInfo info;
    info.members = members;
    std::sort(info.members.begin(), info.members.end(),
              [&](int a, int b) { return rank[a] < rank[b]; });
    for (int m : info.members) {
      if (ul.parent[m] == m || !is_intra(ul.rel_type[m]))
        info.heads.push_back(m);
      else if (std::find(info.intra_types.begin(), info.intra_types.end(), ul.rel_type[m]) ==
               info.intra_types.end())
        info.intra_types.push_back(ul.rel_type[m]);
      if (doc.units[m].kind == UnitKind::ChoiceWidget) info.contains_choice = true;
    }
    comps[key] = std::move(info);
  }

  // per-tree consistency problems
  std::vector<std::vector<std::string>> problems(tree_roots.size());
  for (const auto& [key, info] : comps) {
    const int t = tree_of[info.members[0]];
    if (info.intra_types.size() > 1) {
      std::vector<std::string> names;
      for (int ty : info.intra_types) names.push_back(labels.name(ty));
      problems[t].push_back("intra chain through unit " + std::to_string(info.members[0]) +
                            " mixes types " + join(names, "/"));
    }
    if (info.heads.size() > 1)
      problems[t].push_back("intra chain through unit " + std::to_string(info.members[0]) +
                            " has " + std::to_string(info.heads.size()) + " heads");
  }
  std::vector<std::vector<std::string>> notes(tree_roots.size());
  for (int j = 0; j < n; ++j) {
    if (ul.parent[j] == j || is_intra(ul.rel_type[j])) continue;
    const int src = ul.parent[j];
    const CompInfo& sc = comps.at(uf.find(src));
    if (sc.heads.size() == 1 && sc.heads[0] != src) {
      const std::string msg = "inter edge to unit " + std::to_string(j) +
                              " starts at non-head unit " + std::to_string(src);
      if (mode == AssembleMode::Strict)
        problems[tree_of[j]].push_back(msg);
      else
        notes[tree_of[j]].push_back(msg);
    }
  }

  Forest out;
  for (std::size_t t = 0; t < tree_roots.size(); ++t) {
    if (!problems[t].empty()) {
      if (mode == AssembleMode::Strict)
        throw std::invalid_argument("inconsistent labels: " + join(problems[t], "; "));
      // downgrade: singleton unknown fields keeping the unit-level edges
      HierTree tree;
      tree.malformed = true;
      tree.diagnostics = problems[t];
      for (const std::string& s : notes[t]) tree.diagnostics.push_back(s);
      std::vector<FieldDraft> drafts;
      std::map<int, int> draft_of;  // unit -> draft
      std::vector<int> units;
      for (int j = 0; j < n; ++j)
        if (tree_of[j] == static_cast<int>(t)) units.push_back(j);
      std::sort(units.begin(), units.end(), [&](int a, int b) { return rank[a] < rank[b]; });
      for (int u : units) {
        FieldDraft d;
        d.members = {u};
        d.head = u;
        d.role = "unknown";
        d.rel_type = ul.parent[u] == u ? root_type : ul.rel_type[u];
        draft_of[u] = static_cast<int>(drafts.size());
        drafts.push_back(std::move(d));
      }
      int root_draft = -1;
      for (int u : units) {
        if (ul.parent[u] == u) {
          root_draft = draft_of[u];
        } else {
          drafts[draft_of[u]].parent = draft_of[ul.parent[u]];
          drafts[draft_of[ul.parent[u]]].children.push_back(draft_of[u]);
        }
      }
      for (auto& d : drafts)
        std::sort(d.children.begin(), d.children.end(),
                  [&](int a, int b) { return rank[drafts[a].head] < rank[drafts[b].head]; });
      emit_preorder(drafts, root_draft, -1, tree);
      out.trees.push_back(std::move(tree));
      continue;
    }

    // well-formed: one field per intra component
    std::vector<FieldDraft> drafts;
    std::map<int, int> draft_of_comp;
    for (const auto& [key, info] : comps) {
      if (tree_of[info.members[0]] != static_cast<int>(t)) continue;
      FieldDraft d;
      d.members = info.members;
      d.head = info.heads[0];
      d.contains_choice = info.contains_choice;
      if (info.members.size() > 1) {
        const std::string& tn = labels.name(info.intra_types[0]);
        d.role = tn.substr(std::string("intra-").size());
      }
      draft_of_comp[key] = static_cast<int>(drafts.size());
      drafts.push_back(std::move(d));
    }
    int root_draft = -1;
    for (auto& [key, di] : draft_of_comp) {
      FieldDraft& d = drafts[di];
      const int head = d.head;
      if (ul.parent[head] == head) {
        d.rel_type = root_type;
        root_draft = di;
      } else {
        d.rel_type = ul.rel_type[head];
        const int parent_comp = uf.find(ul.parent[head]);
        d.parent = draft_of_comp.at(parent_comp);
        drafts[d.parent].children.push_back(di);
      }
    }
    if (root_draft < 0)
      throw std::logic_error("tree without a root field");  // unreachable under validate_labels

    for (auto& d : drafts)
      std::sort(d.children.begin(), d.children.end(),
                [&](int a, int b) { return rank[drafts[a].head] < rank[drafts[b].head]; });

    // roles top-down; field-level graph of a valid tree is itself a tree
    std::vector<int> order{root_draft};
    for (std::size_t q = 0; q < order.size(); ++q)
      for (int c : drafts[order[q]].children) order.push_back(c);
    if (order.size() != drafts.size())
      throw std::logic_error("field graph is not connected");  // unreachable
    for (int di : order) {
      FieldDraft& d = drafts[di];
      if (!d.role.empty()) continue;  // multi-unit: role fixed by intra type
      auto has_outgoing = [&](const char* type_name) {
        const int ty = labels.find(type_name);
        if (ty < 0) return false;
        for (int c : d.children)
          if (drafts[c].rel_type == ty) return true;
        return false;
      };
      if (d.rel_type == root_type) {
        if (has_outgoing("inter-kvp"))
          d.role = "key";
        else if (has_outgoing("inter-cg"))
          d.role = d.contains_choice ? "cf" : "cgt";
        else
          d.role = "text";
      } else {
        const std::string& tn = labels.name(d.rel_type);
        const std::string& pr = drafts[d.parent].role;
        if (tn == "inter-kvp")
          d.role = pr == "key" ? "value" : "key";
        else if (tn == "inter-cg")
          d.role = pr == "cgt" ? "cf" : (d.contains_choice ? "cf" : "cgt");
        else
          d.role = tn.rfind("inter-", 0) == 0 ? tn.substr(6) : "unknown";
      }
    }

    HierTree tree;
    for (const std::string& s : notes[t]) tree.diagnostics.push_back(s);
    emit_preorder(drafts, root_draft, -1, tree);
    out.trees.push_back(std::move(tree));
  }
  return out;
}

}  // namespace formtree::doc
