#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "formtree/arbor.hpp"
#include "formtree/binder.hpp"
#include "formtree/proposer.hpp"

namespace formtree::nn {

struct DecoderConfig {
  int n_layers = 3;
  int n_heads = 4;
  int d_ffn = 256;
  int level_dim = 32;
  int l_max = 16;  // deeper units clamp here; l_max+1 marks cross-tree proposals
  int refine_hidden = 256;
};

std::vector<std::string> validate_decoder_config(const DecoderConfig& cfg);

// Depth of every unit below its tree root (clamped to l_max) and of every
// proposal: the child's level when both endpoints share a tree, the reserved
// index l_max+1 otherwise. Self proposals count as in-tree.
struct TreeLevels {
  std::vector<int> unit_level;
  std::vector<int> proposal_level;
};

TreeLevels compute_levels(const arbor::UnitForest& forest,
                          const std::vector<RelationProposal>& proposals, int l_max);

// trees(p) for p = (i -> j) is {tree(i), tree(j)}. Proposals attend each other
// when their tree sets intersect; a proposal attends exactly the units of its
// trees. Row-major, 1 = attend.
struct TreeMasks {
  std::vector<std::uint8_t> self_mask;   // P x P
  std::vector<std::uint8_t> cross_mask;  // P x N
};

TreeMasks build_tree_masks(const arbor::UnitForest& forest,
                           const std::vector<RelationProposal>& proposals);

// Registers decoder parameters under "dec.". d is the encoder output width;
// the level table is shared between unit and proposal levels.
void init_decoder_params(ParamStore& ps, const DecoderConfig& cfg, int d, int n_types, DType dt,
                         Rng& rng);

// Refines proposal embeddings: queries are FC(F_parent, F_child, level embed),
// context is each unit embedding joined with its level embed; n_layers of
// pre-norm masked self-attention, masked cross-attention and FFN. Output is
// P x d in proposal order.
Value decode_relations(Tape& t, ParamBinder& p, Value f,
                       const std::vector<RelationProposal>& proposals, const TreeLevels& levels,
                       const TreeMasks& masks, const DecoderConfig& cfg, int d);

// Scalar score per proposal, grouped per child: rows are children, columns the
// k ranks. Argmax per row is the refined parent; ties go to the lower rank.
Value refine_logits(Tape& t, ParamBinder& p, Value refined, int n, int k);

// Relation-type logits per proposal; "root" is always reachable.
Value final_type_logits(Tape& t, ParamBinder& p, Value refined, int n_types);

}  // namespace formtree::nn
