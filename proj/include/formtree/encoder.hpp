#pragma once

#include <string>
#include <vector>

#include "formtree/binder.hpp"
#include "formtree/doc_model.hpp"

namespace formtree::nn {

// Unit embedding plus a pre-norm transformer encoder. Layout enters only
// through the 2D geometry features; there is no sequence-position signal, so
// the stack is permutation-equivariant over units.
struct EncoderConfig {
  int d_model = 128;
  int n_layers = 3;
  int n_heads = 4;
  int d_ffn = 256;
  int vocab = 4096;    // hashed token rows; row `vocab` is the empty-text vector
  int text_dim = 64;
  int kind_dim = 32;
  int pos_hidden = 64;
};

std::vector<std::string> validate_encoder_config(const EncoderConfig& cfg);

// FNV-1a over the lowercased token, folded into [0, vocab).
int hash_token(std::string_view token, int vocab);

// Hashed ids of the whitespace-split tokens; empty text yields {vocab}, the
// reserved null row.
std::vector<int> token_ids(const std::string& text, int vocab);

// Registers every encoder parameter under the "enc." prefix.
void init_encoder_params(ParamStore& ps, const EncoderConfig& cfg, DType dt, Rng& rng);

// Per-unit fusion of geometry (2-layer MLP over [x1,y1,x2,y2,w,h]), mean of
// hashed-token embeddings and a kind embedding, projected to d_model. Rows
// follow unit id order.
Value embed_units(Tape& t, ParamBinder& p, const doc::Document& d, const EncoderConfig& cfg);

// n_layers of pre-norm self-attention + FFN with residuals, then a final
// layer norm. Input and output are N x d_model.
Value encode(Tape& t, ParamBinder& p, Value e, const EncoderConfig& cfg);

}  // namespace formtree::nn
