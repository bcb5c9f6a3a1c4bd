#include "formtree/proposer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace formtree::nn {

std::vector<std::string> validate_proposer_config(const ProposerConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.hidden < 1) out.push_back("hidden must be >= 1");
  if (cfg.k < 1) out.push_back("k must be >= 1");
  return out;
}

namespace {

void check_cfg(const ProposerConfig& cfg) {
  const auto errs = validate_proposer_config(cfg);
  if (!errs.empty()) throw std::invalid_argument("proposer config: " + errs.front());
}

void add_linear(ParamStore& ps, const std::string& prefix, int in, int out, DType dt, Rng& rng) {
  ps.add(prefix + ".w", glorot_uniform({static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, dt, rng));
  ps.add(prefix + ".b", Tensor({static_cast<std::size_t>(out)}, dt));
}

Value linear(Tape& t, ParamBinder& p, const std::string& prefix, Value x) {
  return t.add(t.matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

}  // namespace

void init_proposer_params(ParamStore& ps, const ProposerConfig& cfg, int d, int n_types, DType dt,
                          Rng& rng) {
  check_cfg(cfg);
  if (d < 1 || n_types < 2) throw std::invalid_argument("proposer params: bad d or n_types");
  const int h = cfg.hidden;
  add_linear(ps, "prop.score.q", d, h, dt, rng);
  add_linear(ps, "prop.score.k", d, h, dt, rng);
  ps.add("prop.score.m1q", glorot_uniform({static_cast<std::size_t>(h), static_cast<std::size_t>(h)}, dt, rng));
  ps.add("prop.score.m1k", glorot_uniform({static_cast<std::size_t>(h), static_cast<std::size_t>(h)}, dt, rng));
  ps.add("prop.score.m1b", Tensor({static_cast<std::size_t>(h)}, dt));
  add_linear(ps, "prop.score.m2", h, 1, dt, rng);
  add_linear(ps, "prop.type.p", d, h, dt, rng);
  add_linear(ps, "prop.type.c", d, h, dt, rng);
  add_linear(ps, "prop.type.m1", 2 * h, h, dt, rng);
  add_linear(ps, "prop.type.m2", h, n_types, dt, rng);
}

Value parent_logits(Tape& t, ParamBinder& p, Value f, const ProposerConfig& cfg) {
  check_cfg(cfg);
  const std::size_t n = t.value(f).dim(0);
  Value q = linear(t, p, "prop.score.q", f);
  Value k = linear(t, p, "prop.score.k", f);
  // first MLP layer on (q_i concat k_j), split: row j*n+i = q_i m1q + k_j m1k + b
  Value a = t.matmul(q, p("prop.score.m1q"));
  Value b = t.add(t.matmul(k, p("prop.score.m1k")), p("prop.score.m1b"));
  Value g = linear(t, p, "prop.score.m2", t.relu(t.outer_add(a, b)));
  return t.reshape(g, {n, n});
}

std::vector<double> parent_probs(Tape& t, Value logits) {
  return t.value(t.softmax(logits)).to_doubles();
}

std::vector<RelationProposal> top_k_proposals(const std::vector<double>& probs, int n, int k) {
  if (n < 1 || k < 1) throw std::invalid_argument("top_k_proposals: n and k must be >= 1");
  if (probs.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("top_k_proposals: probs size is not n*n");
  const int kk = std::min(k, n);
  std::vector<RelationProposal> out;
  out.reserve(static_cast<std::size_t>(n) * kk);
  std::vector<int> order(n);
  for (int j = 0; j < n; ++j) {
    const double* row = probs.data() + static_cast<std::size_t>(j) * n;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return row[x] > row[y]; });
    for (int r = 0; r < kk; ++r)
      out.push_back({j, order[r], row[order[r]], r + 1});
  }
  return out;
}

Value classify_relations(Tape& t, ParamBinder& p, Value f,
                         const std::vector<RelationProposal>& proposals,
                         const ProposerConfig& cfg, int n_types) {
  check_cfg(cfg);
  if (proposals.empty()) throw std::invalid_argument("classify_relations: no proposals");
  if (t.value(p("prop.type.m2.w")).dim(1) != static_cast<std::size_t>(n_types))
    throw std::invalid_argument("classify_relations: head width differs from n_types");
  std::vector<int> parents, children;
  parents.reserve(proposals.size());
  children.reserve(proposals.size());
  for (const auto& pr : proposals) {
    parents.push_back(pr.parent);
    children.push_back(pr.child);
  }
  Value u = linear(t, p, "prop.type.p", t.gather_rows(f, parents));
  Value v = linear(t, p, "prop.type.c", t.gather_rows(f, children));
  Value x = t.relu(linear(t, p, "prop.type.m1", t.concat({u, v})));
  return linear(t, p, "prop.type.m2", x);
}

arbor::UnitForest build_tree_proposals(const std::vector<double>& probs, int n,
                                       arbor::WeightMode mode) {
  if (probs.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("build_tree_proposals: probs size is not n*n");
  std::vector<double> r(probs.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      r[static_cast<std::size_t>(i) * n + j] = probs[static_cast<std::size_t>(j) * n + i];
  const arbor::RootedScoreGraph g = arbor::build_rooted_graph(r, n, mode);
  return arbor::split_subtrees(arbor::max_arborescence(g));
}

}  // namespace formtree::nn
