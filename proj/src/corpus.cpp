#include "formtree/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "formtree/rng.hpp"
#include "json.hpp"

namespace formtree::corpus {

using doc::AssembleMode;
using doc::BasicUnit;
using doc::BBox;
using doc::Field;
using doc::HierNode;
using doc::HierTree;
using doc::UnitKind;
using nlohmann::json;

std::vector<std::string> validate_gen_config(const GenConfig& cfg) {
  std::vector<std::string> out;
  auto range = [&](const char* what, int lo, int hi, int floor_lo) {
    if (lo < floor_lo || hi < lo)
      out.push_back(std::string(what) + " range [" + std::to_string(lo) + "," +
                    std::to_string(hi) + "] is empty or negative");
  };
  if (cfg.n_docs < 0) out.push_back("n_docs negative");
  range("units", cfg.units_min, cfg.units_max, 1);
  range("kvps", cfg.kvps_min, cfg.kvps_max, 0);
  range("choice groups", cfg.cgs_min, cfg.cgs_max, 0);
  range("entities", cfg.entities_min, cfg.entities_max, 0);
  range("texts", cfg.texts_min, cfg.texts_max, 0);
  if (cfg.p_nest < 0 || cfg.p_nest > 1) out.push_back("p_nest outside [0,1]");
  if (cfg.max_depth < 0 || cfg.max_depth > 6) out.push_back("max_depth outside [0,6]");
  if (cfg.jitter < 0) out.push_back("negative jitter");
  if (cfg.page_width <= 0 || cfg.page_height <= 0) out.push_back("non-positive page size");
  if (cfg.retry_bound < 1) out.push_back("retry_bound < 1");
  if (cfg.entities_max > 0 && cfg.entity_roles.empty())
    out.push_back("entities requested but entity_roles empty");
  return out;
}

RelationLabelSet schema_for(const GenConfig& cfg) {
  std::vector<std::string> names = RelationLabelSet::default_set().names();
  if (cfg.entities_max > 0)
    for (const std::string& r : cfg.entity_roles) names.push_back("intra-" + r);
  return RelationLabelSet::from_names(names);
}

namespace {

const std::vector<std::string> kKeyStems = {
    "name",    "date",  "address", "phone",  "email",     "city",  "state",
    "amount",  "total", "account", "number", "employer",  "owner", "title",
    "dept",    "id",    "zip",     "country", "income",   "branch"};
const std::vector<std::string> kKeyPrefixes = {"full", "first", "last", "home",
                                               "work", "billing", "mailing", "net"};
const std::vector<std::string> kTitleStems = {
    "gender", "status", "type",  "category", "method", "plan",
    "level",  "option", "shift", "frequency"};
const std::vector<std::string> kValueWords = {
    "john", "smith",   "2021", "main", "st",    "acme", "inc",  "100",
    "42",   "ca",      "ny",   "austin", "april", "chicago", "jane", "doe",
    "llc",  "oak",     "ave",  "77005"};
const std::vector<std::string> kChoiceWords = {
    "yes",  "no",     "male",   "female",  "single", "married", "fulltime",
    "parttime", "cash", "credit", "daily", "weekly", "monthly", "other"};
const std::vector<std::string> kTextWords = {
    "please", "complete", "all",  "sections", "form",    "page", "instructions",
    "print",  "clearly",  "use",  "black",    "ink",     "only", "see",
    "reverse", "side",    "for",  "details",  "section", "continue"};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

constexpr double kCharW = 7.2;
constexpr double kTextH = 20;
constexpr double kWidgetSide = 16;
constexpr double kRowH = 34;
constexpr double kMargin = 40;

// One generation attempt. All geometry in page pixels until finalization.
struct DocBuilder {
  const GenConfig& cfg;
  const RelationLabelSet& schema;
  Rng& rng;
  Document doc;
  Forest forest;
  double y = kMargin;
  bool overflow = false;
  const int root_rel, kvp_rel, cg_rel;

  DocBuilder(const GenConfig& c, const RelationLabelSet& s, Rng& r)
      : cfg(c),
        schema(s),
        rng(r),
        root_rel(s.root_index()),
        kvp_rel(s.index_of("inter-kvp")),
        cg_rel(s.index_of("inter-cg")) {}

  double jit() { return rng.uniform(-cfg.jitter, cfg.jitter); }

  int add_unit(const std::string& text, UnitKind kind, double x, double top, double w,
               double h) {
    BasicUnit u;
    u.id = doc.n_units();
    u.kind = kind;
    u.text = text;
    double x1 = x + jit(), y1 = top + jit();
    double x2 = x + w + jit(), y2 = top + h + jit();
    x1 = std::max(0.0, x1);
    y1 = std::max(0.0, y1);
    x2 = std::min(cfg.page_width, std::max(x2, x1 + 4));
    y2 = std::min(cfg.page_height, std::max(y2, y1 + 4));
    u.bbox = {x1 / cfg.page_width, y1 / cfg.page_height, x2 / cfg.page_width,
              y2 / cfg.page_height};
    doc.units.push_back(u);
    if (y2 > cfg.page_height - kMargin) overflow = true;
    return u.id;
  }

  int add_text_unit(const std::string& text, double x, double top) {
    return add_unit(text, UnitKind::TextLine, x, top, std::max(24.0, kCharW * text.size()),
                    kTextH);
  }

  int add_node(HierTree& t, const std::string& role, std::vector<int> members, int parent,
               int rel) {
    HierNode n;
    n.field.role = role;
    n.field.member_units = std::move(members);
    n.field.head_unit = n.field.member_units.front();
    n.parent = parent;
    n.rel_type = rel;
    const int idx = static_cast<int>(t.nodes.size());
    t.nodes.push_back(std::move(n));
    if (parent >= 0) t.nodes[parent].children.push_back(idx);
    return idx;
  }

  std::string key_text() {
    std::string s;
    if (rng.bernoulli(0.3)) s = capitalize(rng.pick(kKeyPrefixes)) + " ";
    s += capitalize(rng.pick(kKeyStems));
    return s + ":";
  }

  std::string value_text() {
    const int n = rng.uniform_int(1, 3);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += " ";
      s += rng.pick(kValueWords);
    }
    return s;
  }

  std::string sentence(int lo, int hi) {
    const int n = rng.uniform_int(lo, hi);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += " ";
      s += rng.pick(kTextWords);
    }
    return s;
  }

  // Nested objects below a container field, indented inside its footprint.
  void render_children(HierTree& t, int parent_node, int depth, double x) {
    const int n = rng.uniform_int(1, 2);
    for (int i = 0; i < n && !overflow; ++i) {
      if (cfg.cgs_max == 0 || rng.bernoulli(0.7))
        render_kvp(t, parent_node, depth, x);
      else
        render_cg(t, parent_node, depth, x);
    }
  }

  void render_kvp(HierTree& t, int parent_node, int depth, double x) {
    const std::string ktext = key_text();
    std::vector<int> key_units{add_text_unit(ktext, x, y)};
    const bool two_line_key = rng.bernoulli(0.1);
    if (two_line_key) {
      key_units.push_back(add_text_unit(capitalize(rng.pick(kKeyStems)) + ":", x, y + 24));
      y += 24;
    }
    const bool nest = depth < cfg.max_depth && rng.bernoulli(cfg.p_nest);
    const double key_w = std::max(24.0, kCharW * ktext.size());

    std::vector<int> value_units;
    double value_x;
    if (!nest && !two_line_key && rng.bernoulli(0.7)) {  // value right of key
      value_x = x + key_w + 14;
      value_units.push_back(add_text_unit(value_text(), value_x, y));
    } else {  // value below key, slightly indented
      value_x = x + 22;
      y += 26;
      value_units.push_back(add_text_unit(value_text(), value_x, y));
    }
    if (rng.bernoulli(0.15)) {
      y += 24;
      value_units.push_back(add_text_unit(value_text(), value_x, y));
    }

    const int key_node = add_node(t, "key", key_units, parent_node,
                                  parent_node < 0 ? root_rel : kvp_rel);
    const int value_node = add_node(t, "value", value_units, key_node, kvp_rel);
    y += kRowH;
    if (nest) render_children(t, value_node, depth + 1, value_x + 24);
  }

  void render_cg(HierTree& t, int parent_node, int depth, double x) {
    const std::string title =
        capitalize(rng.pick(kTitleStems)) + (rng.bernoulli(0.6) ? "?" : ":");
    const int title_unit = add_text_unit(title, x, y);
    const int title_node = add_node(t, "cgt", {title_unit}, parent_node,
                                    parent_node < 0 ? root_rel : cg_rel);
    y += kRowH * 0.85;
    const int n_choices = rng.uniform_int(2, 4);
    const bool nest_here = depth < cfg.max_depth && rng.bernoulli(cfg.p_nest * 0.5);
    const bool horizontal = !nest_here && rng.bernoulli(0.6);

    std::vector<std::string> words;
    while (static_cast<int>(words.size()) < n_choices) {
      const std::string& w = rng.pick(kChoiceWords);
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }

    double cx = x + 18;
    for (int k = 0; k < n_choices && !overflow; ++k) {
      const std::string& word = words[k];
      const double text_w = std::max(24.0, kCharW * word.size());
      const int widget = add_unit("", UnitKind::ChoiceWidget, cx, y + 2, kWidgetSide,
                                  kWidgetSide);
      const int text = add_text_unit(word, cx + kWidgetSide + 6, y);
      const int cf_node = add_node(t, "cf", {widget, text}, title_node, cg_rel);
      if (horizontal) {
        cx += kWidgetSide + 6 + text_w + 26;
        if (cx > cfg.page_width - kMargin - 120) {  // wrap long rows
          cx = x + 18;
          y += kRowH * 0.8;
        }
      } else {
        const bool nest_choice = nest_here && rng.bernoulli(0.6);
        y += kRowH * 0.8;
        if (nest_choice) render_children(t, cf_node, depth + 1, cx + 36);
      }
    }
    if (horizontal) y += kRowH * 0.8;
    y += kRowH - kRowH * 0.8;
  }

  void render_entity(double x) {
    HierTree t;
    const std::string& role = rng.pick(cfg.entity_roles);
    const int n_lines = rng.uniform_int(2, 3);
    std::vector<int> members;
    for (int i = 0; i < n_lines; ++i) {
      members.push_back(add_text_unit(sentence(3, 5), x, y));
      y += 26;
    }
    add_node(t, role, std::move(members), -1, root_rel);
    y += kRowH - 26;
    forest.trees.push_back(std::move(t));
  }

  void render_text(double x) {
    HierTree t;
    const int u = add_text_unit(sentence(2, 6), x, y);
    add_node(t, "text", {u}, -1, root_rel);
    y += kRowH;
    forest.trees.push_back(std::move(t));
  }

  bool build(int doc_index) {
    doc.doc_id = "doc" + std::to_string(doc_index);
    doc.page_width = cfg.page_width;
    doc.page_height = cfg.page_height;

    enum Obj { K, C, E, T };
    std::vector<Obj> objs;
    auto add_objs = [&](Obj o, int lo, int hi) {
      const int n = rng.uniform_int(lo, hi);
      for (int i = 0; i < n; ++i) objs.push_back(o);
    };
    add_objs(K, cfg.kvps_min, cfg.kvps_max);
    add_objs(C, cfg.cgs_min, cfg.cgs_max);
    add_objs(E, cfg.entities_min, cfg.entities_max);
    add_objs(T, cfg.texts_min, cfg.texts_max);
    rng.shuffle(objs);

    // an unused right-hand column slot left by the previous simple KVP
    double slot_y = -1;
    for (Obj o : objs) {
      if (overflow) break;
      const double x = kMargin + rng.uniform(0, 26);
      switch (o) {
        case K: {
          if (slot_y >= 0 && rng.bernoulli(0.4)) {
            const double saved = y;
            y = slot_y;
            HierTree t;
            // simple right-column pair: key with value to its right
            const std::string ktext = key_text();
            const double kx = cfg.page_width / 2 + 20;
            const int ku = add_text_unit(ktext, kx, y);
            const int vu =
                add_text_unit(value_text(), kx + std::max(24.0, kCharW * ktext.size()) + 14, y);
            const int kn = add_node(t, "key", {ku}, -1, root_rel);
            add_node(t, "value", {vu}, kn, kvp_rel);
            forest.trees.push_back(std::move(t));
            slot_y = -1;
            y = saved;
          } else {
            HierTree t;
            const double before = y;
            render_kvp(t, -1, 0, x);
            forest.trees.push_back(std::move(t));
            // a one-row KVP leaves room for a partner on its right
            slot_y = y - before <= kRowH + 1 ? before : -1;
          }
          break;
        }
        case C: {
          HierTree t;
          render_cg(t, -1, 0, x);
          forest.trees.push_back(std::move(t));
          slot_y = -1;
          break;
        }
        case E:
          render_entity(x);
          slot_y = -1;
          break;
        case T:
          render_text(x);
          slot_y = -1;
          break;
      }
    }
    return !overflow && doc.n_units() >= cfg.units_min && doc.n_units() <= cfg.units_max;
  }
};

}  // namespace

Corpus generate_corpus(const GenConfig& cfg) {
  {
    const auto bad = validate_gen_config(cfg);
    if (!bad.empty()) {
      std::string msg = "invalid generator config:";
      for (const auto& s : bad) msg += " " + s + ";";
      throw std::invalid_argument(msg);
    }
  }
  Corpus out;
  out.schema = schema_for(cfg);
  for (int i = 0; i < cfg.n_docs; ++i) {
    Rng rng(cfg.seed ^ static_cast<std::uint64_t>(i));
    bool done = false;
    for (int attempt = 0; attempt < cfg.retry_bound && !done; ++attempt) {
      DocBuilder b(cfg, out.schema, rng);
      if (!b.build(i)) continue;
      LabeledDoc ld;
      ld.doc = std::move(b.doc);
      ld.labels = doc::labels_from_forest(ld.doc, b.forest, out.schema);
      ld.gt = doc::forest_from_labels(ld.doc, ld.labels, out.schema, AssembleMode::Strict);
      out.docs.push_back(std::move(ld));
      done = true;
    }
    if (!done)
      throw std::runtime_error("layout infeasible for doc " + std::to_string(i) + " after " +
                               std::to_string(cfg.retry_bound) +
                               " attempts; relax units/page in the generator config");
  }
  return out;
}

void save_corpus(const Corpus& c, const std::string& path) {
  json root;
  root["schema"] = c.schema.names();
  json docs = json::array();
  for (const LabeledDoc& ld : c.docs) {
    json d;
    d["doc_id"] = ld.doc.doc_id;
    d["page_width"] = ld.doc.page_width;
    d["page_height"] = ld.doc.page_height;
    json units = json::array();
    for (const BasicUnit& u : ld.doc.units) {
      units.push_back({{"id", u.id},
                       {"kind", doc::unit_kind_name(u.kind)},
                       {"bbox", {u.bbox.x1, u.bbox.y1, u.bbox.x2, u.bbox.y2}},
                       {"text", u.text}});
    }
    d["units"] = std::move(units);
    d["labels"] = {{"parent", ld.labels.parent}, {"rel_type", ld.labels.rel_type}};
    docs.push_back(std::move(d));
  }
  root["documents"] = std::move(docs);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << root.dump(1) << "\n";
}

Corpus load_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  json root = json::parse(f);  // parse errors carry byte positions

  Corpus out;
  if (!root.contains("schema")) throw std::runtime_error(path + ": missing schema");
  out.schema = RelationLabelSet::from_names(
      root["schema"].get<std::vector<std::string>>());

  std::size_t idx = 0;
  for (const json& d : root.value("documents", json::array())) {
    const std::string where = path + ": documents[" + std::to_string(idx) + "]";
    LabeledDoc ld;
    ld.doc.doc_id = d.value("doc_id", "");
    ld.doc.page_width = d.value("page_width", 0.0);
    ld.doc.page_height = d.value("page_height", 0.0);
    for (const json& ju : d.value("units", json::array())) {
      BasicUnit u;
      u.id = ju.at("id").get<int>();
      u.kind = doc::unit_kind_from_name(ju.at("kind").get<std::string>());
      const auto bb = ju.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw std::runtime_error(where + ": bbox needs 4 numbers");
      u.bbox = {bb[0], bb[1], bb[2], bb[3]};
      u.text = ju.value("text", "");
      ld.doc.units.push_back(std::move(u));
    }
    {
      const auto bad = doc::validate_document(ld.doc);
      if (!bad.empty()) throw std::runtime_error(where + ": " + bad.front());
    }
    const json& lbl = d.at("labels");
    ld.labels.parent = lbl.at("parent").get<std::vector<int>>();
    ld.labels.rel_type = lbl.at("rel_type").get<std::vector<int>>();
    {
      const auto bad = doc::validate_labels(ld.doc.n_units(), ld.labels, out.schema);
      if (!bad.empty()) throw std::runtime_error(where + ".labels: " + bad.front());
    }
    ld.gt = doc::forest_from_labels(ld.doc, ld.labels, out.schema, AssembleMode::Strict);
    out.docs.push_back(std::move(ld));
    ++idx;
  }
  return out;
}

CorpusStats compute_stats(const Corpus& c) {
  CorpusStats s;
  s.n_docs = static_cast<int>(c.docs.size());
  for (const LabeledDoc& ld : c.docs) {
    s.n_units += ld.doc.n_units();
    s.n_trees += static_cast<int>(ld.gt.trees.size());
    for (const HierTree& t : ld.gt.trees) ++s.trees_by_kind[doc::tree_kind(t)];
  }
  return s;
}

}  // namespace formtree::corpus
