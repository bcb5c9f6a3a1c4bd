#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "formtree/corpus.hpp"
#include "formtree/model.hpp"

namespace formtree::nn {

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  DType dtype = DType::F32;
  int epochs = 30;
  int warmup_epochs = 1;  // linear LR ramp over this many leading epochs
  int ohem_pos = 32;
  int ohem_neg = 32;
  int accum = 8;  // documents per optimizer step
  double eval_fraction = 0.2;
  std::uint64_t seed = 1;
};

// Every violated invariant, empty when valid.
std::vector<std::string> validate_train_config(const TrainConfig& cfg);

// The n_pos highest-loss flagged items plus the n_neg highest-loss unflagged
// ones; a pool smaller than its quota is taken whole, ties go to the lower
// index. Returned indices are ascending. Depends only on the arguments.
std::vector<int> ohem_sample(const std::vector<double>& losses,
                             const std::vector<std::uint8_t>& is_positive, int n_pos, int n_neg);

// Per-term values are reads of the live tape scalars; total is their sum. A
// child whose true parent missed the top-k is excluded from the refinement
// and final-type terms and shows up in covered / n_children instead.
struct LossTerms {
  Value total;
  double parent = 0;
  double proposal_type = 0;
  double refine = 0;
  double final_type = 0;
  int covered = 0;
  int n_children = 0;
};

// Sum of four cross-entropies, each a mean over its items: parent choice per
// child, proposal type over OHEM-sampled proposals (true edges keep their
// label, every other proposal targets root as the no-relation class),
// refinement rank per covered child, and final type over OHEM-sampled covered
// children. OHEM guards the two type heads only; widen it here if the dense
// terms ever need it.
LossTerms total_loss(Tape& t, const ModelOutput& out, const doc::UnifiedLabels& gt,
                     const doc::RelationLabelSet& labels, int ohem_pos, int ohem_neg);

// opt_step is 0-based; climbs linearly to lr across warmup_steps, then holds.
double warmup_lr(double lr, long opt_step, long warmup_steps);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0;
  double f1_field = 0;
  double f1_tree = 0;
  double teds_kvp = 0;
  double teds_cg = 0;
  double proposal_coverage = 0;
};

// One JSON-lines record, no trailing newline.
std::string record_json(const EpochRecord& r);

struct TrainResult {
  ParamStore params;
  std::vector<EpochRecord> log;
  std::vector<int> eval_docs;  // corpus indices of the held-out split, ascending
};

// Single-threaded, deterministic in cfg. The held-out split is the tail of a
// seed-shuffled document order; eval_fraction 0 scores the training documents
// instead. Per-epoch metrics come from refined-path predictions; coverage is
// the epoch's training-side top-k hit rate. A non-finite loss aborts, naming
// the epoch, optimizer step and document.
TrainResult train(const corpus::Corpus& c, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace formtree::nn
