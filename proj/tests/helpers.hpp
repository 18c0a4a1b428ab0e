#pragma once

#include "c2t/rng.hpp"
#include "c2t/tensor.hpp"
#include "c2t/transformer.hpp"

namespace c2t::testing {

inline nn::Matrix random_matrix(Rng& rng, nn::Index rows, nn::Index cols, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline model::TransformerConfig tiny_config(int vocab_size, int input_dim = 6) {
  model::TransformerConfig c;
  c.d_model = 8;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.n_heads = 2;
  c.d_k = 4;
  c.d_v = 4;
  c.d_ff = 16;
  c.input_dim = input_dim;
  c.vocab_size = vocab_size;
  c.max_src_len = 64;
  c.max_tgt_len = 16;
  return c;
}

}  // namespace c2t::testing
