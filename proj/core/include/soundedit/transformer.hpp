#pragma once

#include "soundedit/autodiff.hpp"

namespace soundedit {

/// Pre-LN transformer encoder layer: x + MHSA(LN(x)), then h + FFN(LN(h)).
/// FFN is linear -> GELU -> linear with hidden width ffn_mult * d.
/// Parameters registered under `{prefix}.`:
///   ln1.g ln1.b  wq wk wv wo  bq bk bv bo  ln2.g ln2.b  ffn.w1 ffn.b1 ffn.w2 ffn.b2
void init_encoder_layer(ParamStore& store, const std::string& prefix, int d, int ffn_mult,
                        RandomStream& rng);

/// Forward through one layer; x is seq_len x d, heads must divide d.
Var encoder_layer_forward(Tape& t, const BoundParams& p, const std::string& prefix, Var x,
                          int d, int heads);

/// Scaled dot-product attention with separate query/key-value sources.
/// q_in: n x d_q, kv_in: m x d_kv. Projections wq: a x d_q, wk/wv: a x d_kv,
/// wo: d_q x a (output returns to query width). Single head.
Var cross_attention(Tape& t, Var q_in, Var kv_in, Var wq, Var wk, Var wv, Var wo);

/// Standard sinusoidal table: row p, column 2i   = sin(p / 10000^(2i/d)),
///                                  column 2i+1 = cos(p / 10000^(2i/d)).
Tensor sinusoidal_rows(int n, int d);

/// One sinusoidal row for a (possibly non-integer) position value.
Tensor sinusoidal_row(double pos, int d);

}  // namespace soundedit
