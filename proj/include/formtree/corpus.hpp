#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "formtree/doc_model.hpp"

namespace formtree::corpus {

using doc::Document;
using doc::Forest;
using doc::RelationLabelSet;
using doc::UnifiedLabels;

// Knobs for the synthetic form generator. Counts are inclusive ranges drawn
// per document; a draw whose unit total lands outside [units_min, units_max]
// or overflows the page is retried up to retry_bound times.
struct GenConfig {
  std::uint64_t seed = 7;
  int n_docs = 100;
  int units_min = 8, units_max = 36;
  int kvps_min = 2, kvps_max = 5;
  int cgs_min = 1, cgs_max = 2;
  int entities_min = 0, entities_max = 0;
  int texts_min = 1, texts_max = 3;
  double p_nest = 0.25;
  int max_depth = 2;                     // structured objects nested below top level
  double jitter = 2.0;                   // px, applied to every bbox edge
  double page_width = 1000, page_height = 1400;
  std::vector<std::string> entity_roles = {"para"};
  int retry_bound = 20;
};

// Every violated invariant, empty when valid.
std::vector<std::string> validate_gen_config(const GenConfig& cfg);

// Default relation set, plus intra-<role> per entity role when entities are on.
RelationLabelSet schema_for(const GenConfig& cfg);

struct LabeledDoc {
  Document doc;
  UnifiedLabels labels;  // stored form
  Forest gt;             // derived, canonical
};

struct Corpus {
  RelationLabelSet schema;
  std::vector<LabeledDoc> docs;
};

// Deterministic in cfg; per-document stream seeded with seed ^ doc index.
Corpus generate_corpus(const GenConfig& cfg);

// UTF-8 JSON: {"schema":[names], "documents":[{doc_id, page_width, page_height,
// units:[{id,kind,bbox:[x1,y1,x2,y2],text}], labels:{parent:[...],rel_type:[...]}}]}.
// load validates every document and label array, naming the failing record.
void save_corpus(const Corpus& c, const std::string& path);
Corpus load_corpus(const std::string& path);

struct CorpusStats {
  int n_docs = 0;
  int n_units = 0;
  int n_trees = 0;
  std::map<std::string, int> trees_by_kind;
};

CorpusStats compute_stats(const Corpus& c);

}  // namespace formtree::corpus
