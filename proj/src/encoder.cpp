#include "formtree/encoder.hpp"

#include <cctype>
#include <cstdint>
#include <stdexcept>

namespace formtree::nn {

std::vector<std::string> validate_encoder_config(const EncoderConfig& cfg) {
  std::vector<std::string> out;
  auto pos = [&](int v, const char* name) {
    if (v < 1) out.push_back(std::string(name) + " must be >= 1");
  };
  pos(cfg.d_model, "d_model");
  pos(cfg.n_layers, "n_layers");
  pos(cfg.n_heads, "n_heads");
  pos(cfg.d_ffn, "d_ffn");
  pos(cfg.vocab, "vocab");
  pos(cfg.text_dim, "text_dim");
  pos(cfg.kind_dim, "kind_dim");
  pos(cfg.pos_hidden, "pos_hidden");
  if (cfg.d_model >= 1 && cfg.n_heads >= 1 && cfg.d_model % cfg.n_heads != 0)
    out.push_back("d_model not divisible by n_heads");
  return out;
}

int hash_token(std::string_view token, int vocab) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : token) {
    h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
    h *= 1099511628211ull;
  }
  return static_cast<int>(h % static_cast<std::uint64_t>(vocab));
}

std::vector<int> token_ids(const std::string& text, int vocab) {
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) ids.push_back(hash_token({text.data() + i, j - i}, vocab));
    i = j;
  }
  if (ids.empty()) ids.push_back(vocab);
  return ids;
}

namespace {

constexpr int kNumKinds = 3;

void check_cfg(const EncoderConfig& cfg) {
  const auto errs = validate_encoder_config(cfg);
  if (!errs.empty()) throw std::invalid_argument("encoder config: " + errs.front());
}

Tensor table_init(std::size_t rows, std::size_t cols, DType dt, Rng& rng) {
  Tensor t({rows, cols}, dt);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, 0.02));
  return t;
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

}  // namespace

void init_encoder_params(ParamStore& ps, const EncoderConfig& cfg, DType dt, Rng& rng) {
  check_cfg(cfg);
  add_linear(ps, "enc.pos.l1", 6, cfg.pos_hidden, dt, rng);
  add_linear(ps, "enc.pos.l2", cfg.pos_hidden, cfg.pos_hidden, dt, rng);
  ps.add("enc.tok.table", table_init(static_cast<std::size_t>(cfg.vocab) + 1,
                                     static_cast<std::size_t>(cfg.text_dim), dt, rng));
  ps.add("enc.kind.table",
         table_init(kNumKinds, static_cast<std::size_t>(cfg.kind_dim), dt, rng));
  add_linear(ps, "enc.proj", cfg.pos_hidden + cfg.text_dim + cfg.kind_dim, cfg.d_model, dt, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l);
    add_layer_norm(ps, lp + ".ln1", cfg.d_model, dt);
    add_linear(ps, lp + ".attn.q", cfg.d_model, cfg.d_model, dt, rng);
    add_linear(ps, lp + ".attn.k", cfg.d_model, cfg.d_model, dt, rng);
    add_linear(ps, lp + ".attn.v", cfg.d_model, cfg.d_model, dt, rng);
    add_linear(ps, lp + ".attn.o", cfg.d_model, cfg.d_model, dt, rng);
    add_layer_norm(ps, lp + ".ln2", cfg.d_model, dt);
    add_linear(ps, lp + ".ffn.l1", cfg.d_model, cfg.d_ffn, dt, rng);
    add_linear(ps, lp + ".ffn.l2", cfg.d_ffn, cfg.d_model, dt, rng);
  }
  add_layer_norm(ps, "enc.ln", cfg.d_model, dt);
}

Value embed_units(Tape& t, ParamBinder& p, const doc::Document& d, const EncoderConfig& cfg) {
  check_cfg(cfg);
  const std::size_t n = static_cast<std::size_t>(d.n_units());
  if (n == 0) throw std::invalid_argument("embed_units: document has no units");

  Tensor geo({n, 6}, t.dtype());
  std::vector<int> kind_ids(n);
  std::vector<int> tok_ids;
  std::vector<std::pair<std::size_t, std::size_t>> tok_span(n);  // offset, count
  for (std::size_t i = 0; i < n; ++i) {
    const doc::BasicUnit& u = d.units[i];
    geo.set(i * 6 + 0, u.bbox.x1);
    geo.set(i * 6 + 1, u.bbox.y1);
    geo.set(i * 6 + 2, u.bbox.x2);
    geo.set(i * 6 + 3, u.bbox.y2);
    geo.set(i * 6 + 4, u.bbox.width());
    geo.set(i * 6 + 5, u.bbox.height());
    kind_ids[i] = static_cast<int>(u.kind);
    const std::vector<int> ids = token_ids(u.text, cfg.vocab);
    tok_span[i] = {tok_ids.size(), ids.size()};
    tok_ids.insert(tok_ids.end(), ids.begin(), ids.end());
  }

  // per-unit token mean as a fixed averaging matrix, so one lookup serves all
  Tensor avg({n, tok_ids.size()}, t.dtype());
  for (std::size_t i = 0; i < n; ++i) {
    const auto [off, cnt] = tok_span[i];
    for (std::size_t k = 0; k < cnt; ++k)
      avg.set(i * tok_ids.size() + off + k, 1.0 / static_cast<double>(cnt));
  }

  Value pos = linear(t, p, "enc.pos.l2", t.relu(linear(t, p, "enc.pos.l1", t.constant(std::move(geo)))));
  Value txt = t.matmul(t.constant(std::move(avg)), t.embedding_lookup(p("enc.tok.table"), tok_ids));
  Value kind = t.embedding_lookup(p("enc.kind.table"), kind_ids);
  return linear(t, p, "enc.proj", t.concat({pos, txt, kind}));
}

Value encode(Tape& t, ParamBinder& p, Value e, const EncoderConfig& cfg) {
  check_cfg(cfg);
  Value x = e;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l);
    Value h = layer_norm(t, p, lp + ".ln1", x);
    Value a = t.masked_attention(linear(t, p, lp + ".attn.q", h), linear(t, p, lp + ".attn.k", h),
                                 linear(t, p, lp + ".attn.v", h), {}, cfg.n_heads);
    x = t.add(x, linear(t, p, lp + ".attn.o", a));
    Value f = t.relu(linear(t, p, lp + ".ffn.l1", layer_norm(t, p, lp + ".ln2", x)));
    x = t.add(x, linear(t, p, lp + ".ffn.l2", f));
  }
  return layer_norm(t, p, "enc.ln", x);
}

}  // namespace formtree::nn
