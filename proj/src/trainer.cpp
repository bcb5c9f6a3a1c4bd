#include "formtree/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "formtree/arbor.hpp"
#include "formtree/metrics.hpp"

namespace formtree::nn {

std::vector<std::string> validate_train_config(const TrainConfig& cfg) {
  std::vector<std::string> out = validate_model_config(cfg.model);
  if (cfg.epochs < 1) out.push_back("epochs must be >= 1");
  if (cfg.warmup_epochs < 0) out.push_back("warmup epochs must be >= 0");
  if (cfg.ohem_pos < 1) out.push_back("ohem positive count must be >= 1");
  if (cfg.ohem_neg < 1) out.push_back("ohem negative count must be >= 1");
  if (cfg.accum < 1) out.push_back("accum must be >= 1");
  if (!(cfg.eval_fraction >= 0.0 && cfg.eval_fraction < 1.0))
    out.push_back("eval fraction must lie in [0, 1)");
  if (!(cfg.adam.lr > 0)) out.push_back("learning rate must be positive");
  return out;
}

namespace {

// Highest-loss indices from one pool, ties toward the lower index.
std::vector<int> hardest(const std::vector<double>& losses, std::vector<int> pool, int quota) {
  std::stable_sort(pool.begin(), pool.end(),
                   [&](int a, int b) { return losses[a] > losses[b]; });
  if (static_cast<int>(pool.size()) > quota) pool.resize(quota);
  return pool;
}

}  // namespace

std::vector<int> ohem_sample(const std::vector<double>& losses,
                             const std::vector<std::uint8_t>& is_positive, int n_pos, int n_neg) {
  if (losses.size() != is_positive.size())
    throw std::invalid_argument("ohem_sample: flag count does not match loss count");
  if (n_pos < 0 || n_neg < 0) throw std::invalid_argument("ohem_sample: negative quota");
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < losses.size(); ++i)
    (is_positive[i] ? pos : neg).push_back(static_cast<int>(i));
  std::vector<int> out = hardest(losses, std::move(pos), n_pos);
  for (int i : hardest(losses, std::move(neg), n_neg)) out.push_back(i);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Mean of the OHEM-selected rows of a per-item loss vector.
Value ohem_mean(Tape& t, Value per_item, const std::vector<std::uint8_t>& is_positive, int n_pos,
                int n_neg) {
  const Tensor& v = t.value(per_item);
  std::vector<double> losses(v.numel());
  for (std::size_t i = 0; i < v.numel(); ++i) losses[i] = v.at(i);
  const std::vector<int> picked = ohem_sample(losses, is_positive, n_pos, n_neg);
  const Value col = t.reshape(per_item, {v.numel(), 1});
  return t.mean(t.gather_rows(col, picked));
}

double read_scalar(const Tape& t, Value v) { return t.value(v).at(0); }

}  // namespace

LossTerms total_loss(Tape& t, const ModelOutput& out, const doc::UnifiedLabels& gt,
                     const doc::RelationLabelSet& labels, int ohem_pos, int ohem_neg) {
  const int n = out.n, k = out.k;
  if (static_cast<int>(gt.parent.size()) != n || static_cast<int>(gt.rel_type.size()) != n)
    throw std::invalid_argument("total_loss: label count does not match document units");
  const int root = labels.root_index();

  LossTerms lt;
  lt.n_children = n;

  const Value parent_term = t.mean(t.cross_entropy(out.parents, gt.parent));
  lt.parent = read_scalar(t, parent_term);

  std::vector<int> type_targets(out.proposals.size());
  std::vector<std::uint8_t> type_pos(out.proposals.size());
  for (std::size_t p = 0; p < out.proposals.size(); ++p) {
    const RelationProposal& pr = out.proposals[p];
    const bool hit = pr.parent == gt.parent[pr.child];
    type_targets[p] = hit ? gt.rel_type[pr.child] : root;
    type_pos[p] = hit ? 1 : 0;
  }
  const Value type_term = ohem_mean(t, t.cross_entropy(out.proposal_types, type_targets),
                                    type_pos, ohem_pos, ohem_neg);
  lt.proposal_type = read_scalar(t, type_term);

  std::vector<int> covered_children, rank_targets, covered_rows, final_targets;
  for (int j = 0; j < n; ++j) {
    int rank = -1;
    for (int r = 0; r < k && rank < 0; ++r)
      if (out.proposals[static_cast<std::size_t>(j) * k + r].parent == gt.parent[j]) rank = r;
    if (rank < 0) continue;
    covered_children.push_back(j);
    rank_targets.push_back(rank);
    covered_rows.push_back(j * k + rank);
    final_targets.push_back(gt.rel_type[j]);
  }
  lt.covered = static_cast<int>(covered_children.size());

  Value refine_term, final_term;
  if (lt.covered > 0) {
    refine_term =
        t.mean(t.cross_entropy(t.gather_rows(out.refine_scores, covered_children), rank_targets));
    // every gathered row is the child's true edge, so the positive pool is the
    // whole term and OHEM keeps the hardest children
    const std::vector<std::uint8_t> all_pos(covered_rows.size(), 1);
    final_term = ohem_mean(t, t.cross_entropy(t.gather_rows(out.final_types, covered_rows),
                                              final_targets),
                           all_pos, ohem_pos, ohem_neg);
  } else {
    refine_term = t.constant(Tensor::scalar(0.0, t.dtype()));
    final_term = t.constant(Tensor::scalar(0.0, t.dtype()));
  }
  lt.refine = read_scalar(t, refine_term);
  lt.final_type = read_scalar(t, final_term);

  lt.total = t.add(t.add(parent_term, type_term), t.add(refine_term, final_term));
  return lt;
}

double warmup_lr(double lr, long opt_step, long warmup_steps) {
  if (warmup_steps <= 0 || opt_step >= warmup_steps) return lr;
  return lr * static_cast<double>(opt_step + 1) / static_cast<double>(warmup_steps);
}

std::string record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["f1_field"] = r.f1_field;
  j["f1_tree"] = r.f1_tree;
  j["teds_kvp"] = r.teds_kvp;
  j["teds_cg"] = r.teds_cg;
  j["proposal_coverage"] = r.proposal_coverage;
  return j.dump();
}

namespace {

void add_grads(GradMap& into, GradMap&& g) {
  if (into.empty()) {
    into = std::move(g);
    return;
  }
  for (auto& [name, t] : g) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, std::move(t));
      continue;
    }
    for (std::size_t i = 0; i < t.numel(); ++i) it->second.set(i, it->second.at(i) + t.at(i));
  }
}

double kind_teds(const metrics::CorpusReport& rep, const std::string& kind) {
  const auto it = rep.teds_by_kind.find(kind);
  return it == rep.teds_by_kind.end() ? 0.0 : it->second;
}

}  // namespace

TrainResult train(const corpus::Corpus& c, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  {
    const auto errs = validate_train_config(cfg);
    if (!errs.empty()) throw std::invalid_argument("train config: " + errs.front());
  }
  if (c.docs.empty()) throw std::invalid_argument("train: corpus is empty");

  const int n_types = c.schema.size();
  Rng rng(cfg.seed);

  std::vector<int> order(c.docs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int n_eval =
      static_cast<int>(cfg.eval_fraction * static_cast<double>(order.size()));

  TrainResult res;
  res.eval_docs.assign(order.end() - n_eval, order.end());
  std::sort(res.eval_docs.begin(), res.eval_docs.end());
  std::vector<int> train_docs(order.begin(), order.end() - n_eval);
  if (train_docs.empty()) throw std::invalid_argument("train: no training documents after split");
  std::vector<int> scored = res.eval_docs.empty() ? train_docs : res.eval_docs;
  std::sort(scored.begin(), scored.end());

  init_model_params(res.params, cfg.model, n_types, cfg.dtype, cfg.seed);

  const long steps_per_epoch =
      (static_cast<long>(train_docs.size()) + cfg.accum - 1) / cfg.accum;
  const long warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;

  long opt_step = 0;
  GradMap pending;
  int pending_docs = 0;
  const auto flush = [&]() {
    if (pending_docs == 0) return;
    for (auto& [name, g] : pending)
      for (std::size_t i = 0; i < g.numel(); ++i) g.set(i, g.at(i) / pending_docs);
    AdamConfig a = cfg.adam;
    a.lr = warmup_lr(cfg.adam.lr, opt_step, warmup_steps);
    res.params.adam_step(pending, a, opt_step + 1);
    ++opt_step;
    pending.clear();
    pending_docs = 0;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(train_docs);
    double loss_sum = 0;
    long covered = 0, children = 0;
    for (int idx : train_docs) {
      const corpus::LabeledDoc& ld = c.docs[idx];
      Tape t(cfg.dtype);
      ParamBinder p(t, res.params);
      const ModelOutput out = model_forward(t, p, ld.doc, cfg.model, n_types);
      const LossTerms lt = total_loss(t, out, ld.labels, c.schema, cfg.ohem_pos, cfg.ohem_neg);
      const double loss = read_scalar(t, lt.total);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss " << loss << " at epoch " << epoch << ", optimizer step "
            << opt_step << ", document " << ld.doc.doc_id;
        throw std::runtime_error(msg.str());
      }
      loss_sum += loss;
      covered += lt.covered;
      children += lt.n_children;
      t.backward(lt.total);
      add_grads(pending, p.grads());
      if (++pending_docs == cfg.accum) flush();
    }
    flush();

    std::vector<doc::Forest> preds, gts;
    std::vector<doc::Document> docs;
    for (int idx : scored) {
      const corpus::LabeledDoc& ld = c.docs[idx];
      Tape t(cfg.dtype);
      ParamBinder p(t, res.params);
      const ModelOutput out = model_forward(t, p, ld.doc, cfg.model, n_types);
      preds.push_back(arbor::decode(ld.doc, refined_graph(t, out, c.schema), c.schema));
      gts.push_back(ld.gt);
      docs.push_back(ld.doc);
    }
    const metrics::CorpusReport rep = metrics::corpus_eval(preds, gts, docs);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(train_docs.size());
    rec.f1_field = rep.field.micro.f1();
    rec.f1_tree = rep.tree.micro.f1();
    rec.teds_kvp = kind_teds(rep, "kvp");
    rec.teds_cg = kind_teds(rep, "choice_group");
    rec.proposal_coverage =
        children > 0 ? static_cast<double>(covered) / static_cast<double>(children) : 1.0;
    res.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return res;
}

}  // namespace formtree::nn
