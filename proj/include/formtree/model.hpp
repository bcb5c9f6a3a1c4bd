#pragma once

#include <string>
#include <vector>

#include "formtree/encoder.hpp"
#include "formtree/proposer.hpp"
#include "formtree/rel_decoder.hpp"
#include "formtree/relation_graph.hpp"

namespace formtree::nn {

struct ModelConfig {
  EncoderConfig enc;
  ProposerConfig prop;
  DecoderConfig dec;
};

std::vector<std::string> validate_model_config(const ModelConfig& cfg);

// Registers every parameter of the full pipeline. seed fixes the init stream;
// n_types is the relation vocabulary size.
void init_model_params(ParamStore& ps, const ModelConfig& cfg, int n_types, DType dt,
                       std::uint64_t seed);

// One full forward pass. Values live on the tape passed in; k is min(cfg
// k, N) so the proposal list is always rectangular.
struct ModelOutput {
  int n = 0;
  int k = 0;
  Value embeddings;                  // N x d
  Value parents;                     // N x N child-major logits
  std::vector<double> parent_probs;  // softmax of parents, child-major
  std::vector<RelationProposal> proposals;
  Value proposal_types;              // (N*k) x C logits
  arbor::UnitForest tree_proposals;
  TreeLevels levels;
  TreeMasks masks;
  Value refined;                     // (N*k) x d
  Value refine_scores;               // N x k logits over ranks
  Value final_types;                 // (N*k) x C logits
};

ModelOutput model_forward(Tape& t, ParamBinder& p, const doc::Document& d,
                          const ModelConfig& cfg, int n_types);

// Score graphs for both decoding stages. The proposal graph is dense: R from
// the parent softmax, C from the type head over every pair. The refined graph
// is sparse: each child's k candidates carry its refinement softmax, other
// cells are zero and fall to the decoder's floor.
struct DocumentScores {
  doc::ScoredRelationGraph proposal;
  doc::ScoredRelationGraph refined;
};

DocumentScores score_document(const doc::Document& d, const ParamStore& ps,
                              const ModelConfig& cfg, const doc::RelationLabelSet& labels);

// Refined-stage graph from an existing forward pass. Cheaper than
// score_document when the dense proposal graph is not needed.
doc::ScoredRelationGraph refined_graph(const Tape& t, const ModelOutput& out,
                                       const doc::RelationLabelSet& labels);

doc::Forest predict(const doc::Document& d, const ParamStore& ps, const ModelConfig& cfg,
                    const doc::RelationLabelSet& labels, bool refined);

}  // namespace formtree::nn
