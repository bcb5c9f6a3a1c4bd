#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace formtree::doc {

// Page coordinates normalized to [0,1] by page width/height.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool operator==(const BBox&) const = default;
};

enum class UnitKind { TextLine, TextWidget, ChoiceWidget };

const char* unit_kind_name(UnitKind k);
UnitKind unit_kind_from_name(std::string_view s);

// One atomic form element. Widgets may have empty text.
struct BasicUnit {
  int id = -1;
  UnitKind kind = UnitKind::TextLine;
  BBox bbox;
  std::string text;
  bool operator==(const BasicUnit&) const = default;
};

struct Document {
  std::string doc_id;
  double page_width = 0, page_height = 0;
  std::vector<BasicUnit> units;  // ids dense 0..N-1, stored in id order
  int n_units() const { return static_cast<int>(units.size()); }
  bool operator==(const Document&) const = default;
};

// Every violated invariant, empty when valid.
std::vector<std::string> validate_document(const Document& doc);

enum class RelCategory { Root, IntraField, InterField };

// Ordered relation-type vocabulary. "root" appears exactly once; categories
// derive from name prefixes (intra-*, inter-*).
class RelationLabelSet {
 public:
  static RelationLabelSet default_set();
  static RelationLabelSet from_names(const std::vector<std::string>& names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int idx) const { return names_.at(idx); }
  RelCategory category(int idx) const { return cats_.at(idx); }
  const std::vector<std::string>& names() const { return names_; }
  int root_index() const { return root_; }

  int find(std::string_view name) const;      // -1 when absent
  int index_of(std::string_view name) const;  // throws when absent

  bool operator==(const RelationLabelSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<RelCategory> cats_;
  int root_ = -1;
};

// Flat per-unit annotation: parent[j] == j iff rel_type[j] is "root"; the
// non-self edges form a forest.
struct UnifiedLabels {
  std::vector<int> parent;
  std::vector<int> rel_type;
  bool operator==(const UnifiedLabels&) const = default;
};

std::vector<std::string> validate_labels(int n_units, const UnifiedLabels& ul,
                                         const RelationLabelSet& labels);

// Semantically coherent group of units (key, value, cgt, cf, entity type,
// text, unknown). Members in reading order; head is the first.
struct Field {
  std::string role;
  std::vector<int> member_units;
  int head_unit = -1;
  bool operator==(const Field&) const = default;
};

// parent/children index into HierTree::nodes. rel_type is the incoming edge's
// label index ("root" at the tree root, inter-* below; downgraded malformed
// trees keep whatever edge types were predicted).
struct HierNode {
  Field field;
  int parent = -1;
  int rel_type = -1;
  std::vector<int> children;
  bool operator==(const HierNode&) const = default;
};

// Canonical form: nodes in preorder (root at index 0), children ordered by
// head-unit reading order.
struct HierTree {
  std::vector<HierNode> nodes;
  bool malformed = false;
  std::vector<std::string> diagnostics;
  int n_units() const;
};

// Structural equality: fields, edges and types; diagnostics excluded.
bool trees_equal(const HierTree& a, const HierTree& b);

// Trees ordered by the reading rank of their root head unit; unit sets
// partition the document.
struct Forest {
  std::vector<HierTree> trees;
};

bool forests_equal(const Forest& a, const Forest& b);

// Row-major order: rows clustered on y-centers with tolerance 0.5 x median
// unit height, then (row, x1, y1, id). Returns unit ids in order.
std::vector<int> reading_order(const Document& doc);
// rank[unit id] = position in reading order
std::vector<int> reading_rank(const Document& doc);

// kvp | choice_group | entity | text | unknown, from the root field's role.
std::string tree_kind(const HierTree& t);

// Flattens a forest to parent/rel_type per the canonical encoding: intra
// chains in reading order, field heads carrying root or the inter-* edge of
// their tree node. Throws on coverage violations or unknown units.
UnifiedLabels labels_from_forest(const Document& doc, const Forest& forest,
                                 const RelationLabelSet& labels);

enum class AssembleMode {
  Strict,    // ground truth: any inconsistency throws
  Tolerant,  // predictions: inconsistent trees downgraded, flagged malformed
};

// Inverse of labels_from_forest on its image. Tolerant mode downgrades a tree
// with an inconsistent intra chain (mixed types or several chain heads) to
// singleton "unknown" fields that keep the unit-level edges.
Forest forest_from_labels(const Document& doc, const UnifiedLabels& ul,
                          const RelationLabelSet& labels,
                          AssembleMode mode = AssembleMode::Strict);

}  // namespace formtree::doc
