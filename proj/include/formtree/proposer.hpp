#pragma once

#include <string>
#include <vector>

#include "formtree/arbor.hpp"
#include "formtree/binder.hpp"

namespace formtree::nn {

struct ProposerConfig {
  int hidden = 256;
  int k = 5;
};

std::vector<std::string> validate_proposer_config(const ProposerConfig& cfg);

// One candidate parent for one child. Lists are child-major with exactly
// min(k, n) entries per child, ranks 1-based, scores non-increasing within a
// child and ties broken toward the lower parent index.
struct RelationProposal {
  int child = -1;
  int parent = -1;
  double score = 0;
  int rank = 0;
};

// Registers proposer parameters under "prop.". d is the encoder output width;
// n_types the relation vocabulary size.
void init_proposer_params(ParamStore& ps, const ProposerConfig& cfg, int d, int n_types, DType dt,
                          Rng& rng);

// Child-major parent logits: row j holds the N scores of candidate parents of
// unit j; entry (j, j) scores "j is a root". The pairwise MLP's first layer is
// applied as split weights over the two FC outputs, so the full N x N grid
// costs two N x h products plus one outer add.
Value parent_logits(Tape& t, ParamBinder& p, Value f, const ProposerConfig& cfg);

// Row-softmax of the logits' values: probs[j*n + i] = P(parent of j is i).
std::vector<double> parent_probs(Tape& t, Value logits);

// Top-k candidate parents per child from child-major probabilities.
std::vector<RelationProposal> top_k_proposals(const std::vector<double>& probs, int n, int k);

// Type logits, one row per proposal. Parent and child sides pass through
// distinct FCs before the shared MLP; self proposals are ordinary rows, so
// "root" stays reachable.
Value classify_relations(Tape& t, ParamBinder& p, Value f,
                         const std::vector<RelationProposal>& proposals,
                         const ProposerConfig& cfg, int n_types);

// Maximum-arborescence forest over the parent probabilities; the decoder's
// masks and levels are derived from it. Reduces to per-child argmax whenever
// argmax is cycle-free.
arbor::UnitForest build_tree_proposals(const std::vector<double>& probs, int n,
                                       arbor::WeightMode mode = arbor::WeightMode::LogProb);

}  // namespace formtree::nn
