#include "formtree/rel_decoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace formtree::nn {

std::vector<std::string> validate_decoder_config(const DecoderConfig& cfg) {
  std::vector<std::string> out;
  auto pos = [&](int v, const char* name) {
    if (v < 1) out.push_back(std::string(name) + " must be >= 1");
  };
  pos(cfg.n_layers, "n_layers");
  pos(cfg.n_heads, "n_heads");
  pos(cfg.d_ffn, "d_ffn");
  pos(cfg.level_dim, "level_dim");
  pos(cfg.l_max, "l_max");
  pos(cfg.refine_hidden, "refine_hidden");
  return out;
}

namespace {

void check_cfg(const DecoderConfig& cfg) {
  const auto errs = validate_decoder_config(cfg);
  if (!errs.empty()) throw std::invalid_argument("decoder config: " + errs.front());
}

void check_proposals(const arbor::UnitForest& forest,
                     const std::vector<RelationProposal>& proposals) {
  const int n = static_cast<int>(forest.tree_of.size());
  if (proposals.empty()) throw std::invalid_argument("no proposals");
  for (const auto& p : proposals)
    if (p.parent < 0 || p.parent >= n || p.child < 0 || p.child >= n)
      throw std::invalid_argument("proposal endpoint outside the forest");
}

void add_linear(ParamStore& ps, const std::string& prefix, int in, int out, DType dt, Rng& rng) {
  ps.add(prefix + ".w", glorot_uniform({static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, dt, rng));
  ps.add(prefix + ".b", Tensor({static_cast<std::size_t>(out)}, dt));
}

void add_layer_norm(ParamStore& ps, const std::string& prefix, int dim, DType dt) {
  Tensor g({static_cast<std::size_t>(dim)}, dt);
  g.fill(1.0);
  ps.add(prefix + ".g", std::move(g));
  ps.add(prefix + ".b", Tensor({static_cast<std::size_t>(dim)}, dt));
}

Value linear(Tape& t, ParamBinder& p, const std::string& prefix, Value x) {
  return t.add(t.matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Value layer_norm(Tape& t, ParamBinder& p, const std::string& prefix, Value x) {
  return t.layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
}

Tensor table_init(std::size_t rows, std::size_t cols, DType dt, Rng& rng) {
  Tensor t({rows, cols}, dt);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, 0.02));
  return t;
}

}  // namespace

TreeLevels compute_levels(const arbor::UnitForest& forest,
                          const std::vector<RelationProposal>& proposals, int l_max) {
  if (l_max < 1) throw std::invalid_argument("compute_levels: l_max must be >= 1");
  check_proposals(forest, proposals);
  TreeLevels out;
  out.unit_level.reserve(forest.depth.size());
  for (int d : forest.depth) out.unit_level.push_back(std::min(d, l_max));
  out.proposal_level.reserve(proposals.size());
  for (const auto& p : proposals) {
    const bool in_tree = forest.tree_of[p.parent] == forest.tree_of[p.child];
    out.proposal_level.push_back(in_tree ? out.unit_level[p.child] : l_max + 1);
  }
  return out;
}

TreeMasks build_tree_masks(const arbor::UnitForest& forest,
                           const std::vector<RelationProposal>& proposals) {
  check_proposals(forest, proposals);
  const std::size_t np = proposals.size();
  const std::size_t n = forest.tree_of.size();
  std::vector<std::pair<int, int>> trees(np);  // tree pair, smaller first
  for (std::size_t p = 0; p < np; ++p) {
    int a = forest.tree_of[proposals[p].parent];
    int b = forest.tree_of[proposals[p].child];
    if (a > b) std::swap(a, b);
    trees[p] = {a, b};
  }
  TreeMasks out;
  out.self_mask.assign(np * np, 0);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t q = 0; q < np; ++q) {
      const auto& [a, b] = trees[p];
      const auto& [c, d] = trees[q];
      out.self_mask[p * np + q] = (a == c || a == d || b == c || b == d) ? 1 : 0;
    }
  out.cross_mask.assign(np * n, 0);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t u = 0; u < n; ++u) {
      const int tu = forest.tree_of[u];
      out.cross_mask[p * n + u] = (tu == trees[p].first || tu == trees[p].second) ? 1 : 0;
    }
  return out;
}

void init_decoder_params(ParamStore& ps, const DecoderConfig& cfg, int d, int n_types, DType dt,
                         Rng& rng) {
  check_cfg(cfg);
  if (d < 1 || d % cfg.n_heads != 0)
    throw std::invalid_argument("decoder params: d must be positive and divisible by n_heads");
  if (n_types < 2) throw std::invalid_argument("decoder params: n_types must be >= 2");
  ps.add("dec.lvl.table", table_init(static_cast<std::size_t>(cfg.l_max) + 2,
                                     static_cast<std::size_t>(cfg.level_dim), dt, rng));
  add_linear(ps, "dec.query", 2 * d + cfg.level_dim, d, dt, rng);
  add_linear(ps, "dec.ctx", d + cfg.level_dim, d, dt, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l);
    add_layer_norm(ps, lp + ".ln1", d, dt);
    add_linear(ps, lp + ".self.q", d, d, dt, rng);
    add_linear(ps, lp + ".self.k", d, d, dt, rng);
    add_linear(ps, lp + ".self.v", d, d, dt, rng);
    add_linear(ps, lp + ".self.o", d, d, dt, rng);
    add_layer_norm(ps, lp + ".ln2", d, dt);
    add_linear(ps, lp + ".cross.q", d, d, dt, rng);
    add_linear(ps, lp + ".cross.k", d, d, dt, rng);
    add_linear(ps, lp + ".cross.v", d, d, dt, rng);
    add_linear(ps, lp + ".cross.o", d, d, dt, rng);
    add_layer_norm(ps, lp + ".ln3", d, dt);
    add_linear(ps, lp + ".ffn.l1", d, cfg.d_ffn, dt, rng);
    add_linear(ps, lp + ".ffn.l2", cfg.d_ffn, d, dt, rng);
  }
  add_layer_norm(ps, "dec.ln", d, dt);
  add_linear(ps, "dec.refine.l1", d, cfg.refine_hidden, dt, rng);
  add_linear(ps, "dec.refine.l2", cfg.refine_hidden, 1, dt, rng);
  add_linear(ps, "dec.type.l1", d, cfg.refine_hidden, dt, rng);
  add_linear(ps, "dec.type.l2", cfg.refine_hidden, n_types, dt, rng);
}

Value decode_relations(Tape& t, ParamBinder& p, Value f,
                       const std::vector<RelationProposal>& proposals, const TreeLevels& levels,
                       const TreeMasks& masks, const DecoderConfig& cfg, int d) {
  check_cfg(cfg);
  const std::size_t np = proposals.size();
  const std::size_t n = t.value(f).dim(0);
  if (t.value(f).dim(1) != static_cast<std::size_t>(d))
    throw std::invalid_argument("decode_relations: unit embedding width is not d");
  if (levels.proposal_level.size() != np || levels.unit_level.size() != n)
    throw std::invalid_argument("decode_relations: level sizes disagree with inputs");
  if (masks.self_mask.size() != np * np || masks.cross_mask.size() != np * n)
    throw std::invalid_argument("decode_relations: mask sizes disagree with inputs");

  std::vector<int> parents, children;
  parents.reserve(np);
  children.reserve(np);
  for (const auto& pr : proposals) {
    parents.push_back(pr.parent);
    children.push_back(pr.child);
  }
  Value lvl = p("dec.lvl.table");
  Value x = linear(t, p, "dec.query",
                   t.concat({t.gather_rows(f, parents), t.gather_rows(f, children),
                             t.embedding_lookup(lvl, levels.proposal_level)}));
  Value ctx = linear(t, p, "dec.ctx",
                     t.concat({f, t.embedding_lookup(lvl, levels.unit_level)}));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l);
    Value h = layer_norm(t, p, lp + ".ln1", x);
    Value a = t.masked_attention(linear(t, p, lp + ".self.q", h), linear(t, p, lp + ".self.k", h),
                                 linear(t, p, lp + ".self.v", h), masks.self_mask, cfg.n_heads);
    x = t.add(x, linear(t, p, lp + ".self.o", a));
    Value h2 = layer_norm(t, p, lp + ".ln2", x);
    Value c = t.masked_attention(linear(t, p, lp + ".cross.q", h2),
                                 linear(t, p, lp + ".cross.k", ctx),
                                 linear(t, p, lp + ".cross.v", ctx), masks.cross_mask, cfg.n_heads);
    x = t.add(x, linear(t, p, lp + ".cross.o", c));
    Value h3 = t.relu(linear(t, p, lp + ".ffn.l1", layer_norm(t, p, lp + ".ln3", x)));
    x = t.add(x, linear(t, p, lp + ".ffn.l2", h3));
  }
  return layer_norm(t, p, "dec.ln", x);
}

Value refine_logits(Tape& t, ParamBinder& p, Value refined, int n, int k) {
  if (n < 1 || k < 1) throw std::invalid_argument("refine_logits: n and k must be >= 1");
  if (t.value(refined).dim(0) != static_cast<std::size_t>(n) * k)
    throw std::invalid_argument("refine_logits: row count is not n*k");
  Value s = linear(t, p, "dec.refine.l2", t.relu(linear(t, p, "dec.refine.l1", refined)));
  return t.reshape(s, {static_cast<std::size_t>(n), static_cast<std::size_t>(k)});
}

Value final_type_logits(Tape& t, ParamBinder& p, Value refined, int n_types) {
  if (t.value(p("dec.type.l2.w")).dim(1) != static_cast<std::size_t>(n_types))
    throw std::invalid_argument("final_type_logits: head width differs from n_types");
  return linear(t, p, "dec.type.l2", t.relu(linear(t, p, "dec.type.l1", refined)));
}

}  // namespace formtree::nn
