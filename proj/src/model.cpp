#include "formtree/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace formtree::nn {

std::vector<std::string> validate_model_config(const ModelConfig& cfg) {
  std::vector<std::string> out = validate_encoder_config(cfg.enc);
  for (auto& e : validate_proposer_config(cfg.prop)) out.push_back("prop: " + e);
  for (auto& e : validate_decoder_config(cfg.dec)) out.push_back("dec: " + e);
  if (cfg.enc.d_model >= 1 && cfg.dec.n_heads >= 1 && cfg.enc.d_model % cfg.dec.n_heads != 0)
    out.push_back("d_model not divisible by decoder heads");
  return out;
}

namespace {

void check_cfg(const ModelConfig& cfg) {
  const auto errs = validate_model_config(cfg);
  if (!errs.empty()) throw std::invalid_argument("model config: " + errs.front());
}

int argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.dim(1);
  int best = 0;
  for (std::size_t t = 1; t < c; ++t)
    if (logits.at(row * c + t) > logits.at(row * c + best)) best = static_cast<int>(t);
  return best;
}

int first_non_root(const doc::RelationLabelSet& labels) {
  for (int i = 0; i < labels.size(); ++i)
    if (labels.category(i) != doc::RelCategory::Root) return i;
  throw std::invalid_argument("label set has no non-root types");
}

}  // namespace

void init_model_params(ParamStore& ps, const ModelConfig& cfg, int n_types, DType dt,
                       std::uint64_t seed) {
  check_cfg(cfg);
  Rng rng(seed);
  init_encoder_params(ps, cfg.enc, dt, rng);
  init_proposer_params(ps, cfg.prop, cfg.enc.d_model, n_types, dt, rng);
  init_decoder_params(ps, cfg.dec, cfg.enc.d_model, n_types, dt, rng);
}

ModelOutput model_forward(Tape& t, ParamBinder& p, const doc::Document& d,
                          const ModelConfig& cfg, int n_types) {
  check_cfg(cfg);
  ModelOutput out;
  out.n = d.n_units();
  out.k = std::min(cfg.prop.k, out.n);
  out.embeddings = encode(t, p, embed_units(t, p, d, cfg.enc), cfg.enc);
  out.parents = parent_logits(t, p, out.embeddings, cfg.prop);
  out.parent_probs = parent_probs(t, out.parents);
  out.proposals = top_k_proposals(out.parent_probs, out.n, cfg.prop.k);
  out.proposal_types = classify_relations(t, p, out.embeddings, out.proposals, cfg.prop, n_types);
  out.tree_proposals = build_tree_proposals(out.parent_probs, out.n);
  out.levels = compute_levels(out.tree_proposals, out.proposals, cfg.dec.l_max);
  out.masks = build_tree_masks(out.tree_proposals, out.proposals);
  out.refined = decode_relations(t, p, out.embeddings, out.proposals, out.levels, out.masks,
                                 cfg.dec, cfg.enc.d_model);
  out.refine_scores = refine_logits(t, p, out.refined, out.n, out.k);
  out.final_types = final_type_logits(t, p, out.refined, n_types);
  return out;
}

doc::ScoredRelationGraph refined_graph(const Tape& t, const ModelOutput& out,
                                       const doc::RelationLabelSet& labels) {
  const int n = out.n;
  doc::ScoredRelationGraph g;
  g.n = n;
  g.r.assign(static_cast<std::size_t>(n) * n, 0.0);
  g.c.assign(static_cast<std::size_t>(n) * n, first_non_root(labels));
  for (int j = 0; j < n; ++j) g.at_c(j, j) = labels.root_index();
  const Tensor& rs = t.value(out.refine_scores);
  const Tensor& ft = t.value(out.final_types);
  for (int j = 0; j < n; ++j) {
    double mx = rs.at(static_cast<std::size_t>(j) * out.k);
    for (int r = 1; r < out.k; ++r)
      mx = std::max(mx, rs.at(static_cast<std::size_t>(j) * out.k + r));
    double denom = 0;
    for (int r = 0; r < out.k; ++r)
      denom += std::exp(rs.at(static_cast<std::size_t>(j) * out.k + r) - mx);
    for (int r = 0; r < out.k; ++r) {
      const RelationProposal& pr = out.proposals[static_cast<std::size_t>(j) * out.k + r];
      g.at_r(pr.parent, j) = std::exp(rs.at(static_cast<std::size_t>(j) * out.k + r) - mx) / denom;
      g.at_c(pr.parent, j) = argmax_row(ft, static_cast<std::size_t>(j) * out.k + r);
    }
  }
  return g;
}

DocumentScores score_document(const doc::Document& d, const ParamStore& ps,
                              const ModelConfig& cfg, const doc::RelationLabelSet& labels) {
  const DType dt = ps.at("enc.ln.g").dtype();
  Tape t(dt);
  ParamBinder p(t, ps);
  const ModelOutput out = model_forward(t, p, d, cfg, labels.size());
  const int n = out.n;
  const int fallback = first_non_root(labels);

  DocumentScores s;
  s.proposal.n = n;
  s.proposal.r.assign(static_cast<std::size_t>(n) * n, 0.0);
  s.proposal.c.assign(static_cast<std::size_t>(n) * n, fallback);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      s.proposal.at_r(i, j) = out.parent_probs[static_cast<std::size_t>(j) * n + i];

  // dense type pass: every (parent, child) pair as a pseudo proposal
  {
    std::vector<RelationProposal> all;
    all.reserve(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) all.push_back({j, i, 0.0, 0});
    Value dense = classify_relations(t, p, out.embeddings, all, cfg.prop, labels.size());
    const Tensor& dl = t.value(dense);
    for (std::size_t row = 0; row < all.size(); ++row)
      s.proposal.at_c(all[row].parent, all[row].child) = argmax_row(dl, row);
  }

  s.refined = refined_graph(t, out, labels);
  return s;
}

doc::Forest predict(const doc::Document& d, const ParamStore& ps, const ModelConfig& cfg,
                    const doc::RelationLabelSet& labels, bool refined) {
  const DocumentScores s = score_document(d, ps, cfg, labels);
  return arbor::decode(d, refined ? s.refined : s.proposal, labels);
}

}  // namespace formtree::nn
