#pragma once

// LSTM cell and unrolled sequence layer. Gate columns are laid out
// [i | f | o | g] in the fused 4h-wide weight matrices.

#include <cstddef>
#include <string>
#include <vector>

#include "phiscrub/numerics/ops.hpp"
#include "phiscrub/numerics/random.hpp"

namespace phiscrub::taggers {

using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

struct LstmWeights {
  Parameter wx;  // [in, 4h]
  Parameter wh;  // [h, 4h]
  Parameter b;   // [4h]

  std::size_t hidden() const { return wh.value.rows(); }

  static LstmWeights init(const std::string& prefix, std::size_t in, std::size_t hidden, num::Rng& rng,
                          double forget_bias = 1.0) {
    LstmWeights w{{prefix + ".wx", Tensor({in, 4 * hidden})},
                  {prefix + ".wh", Tensor({hidden, 4 * hidden})},
                  {prefix + ".b", Tensor({4 * hidden})}};
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
    num::fill_uniform(w.wx.value, limit, rng);
    num::fill_uniform(w.wh.value, limit, rng);
    for (std::size_t k = hidden; k < 2 * hidden; ++k) w.b.value[k] = forget_bias;
    return w;
  }

  std::vector<Parameter*> parameters() { return {&wx, &wh, &b}; }
};

struct LstmState {
  Var h;
  Var c;
};

// Gates from the full pre-activation z = x Wx + h_prev Wh + b, [B, 4h].
inline LstmState lstm_gates(Var z, Var c_prev) {
  const std::size_t h = z.value().cols() / 4;
  if (z.value().cols() != 4 * h || c_prev.value().cols() != h || c_prev.value().rows() != z.value().rows()) {
    throw ShapeError("lstm: gate pre-activation " + num::shape_string(z.shape()) + " vs cell " +
                     num::shape_string(c_prev.shape()));
  }
  Var i = num::sigmoid(num::slice_cols(z, 0, h));
  Var f = num::sigmoid(num::slice_cols(z, h, 2 * h));
  Var o = num::sigmoid(num::slice_cols(z, 2 * h, 3 * h));
  Var g = num::tanh(num::slice_cols(z, 3 * h, 4 * h));
  Var c = num::add(num::mul(f, c_prev), num::mul(i, g));
  return {num::mul(o, num::tanh(c)), c};
}

inline LstmState lstm_cell_step(Var x, Var h_prev, Var c_prev, Var wx, Var wh, Var b) {
  if (wh.value().rows() != h_prev.value().cols()) throw ShapeError("lstm: hidden size disagrees with Wh");
  return lstm_gates(num::add(num::affine(x, wx, b), num::matmul(h_prev, wh)), c_prev);
}

// Runs one direction over x [T * B, in] (time-major). Returns [T * B, h]
// with row t * B + b holding the state at position t, whichever direction
// the recurrence ran.
inline Var lstm_sequence(Var x, std::size_t batch, Var wx, Var wh, Var b, bool reverse) {
  Tape& tape = *x.tape;
  const std::size_t rows = x.value().rows();
  if (batch == 0 || rows == 0 || rows % batch != 0) throw ShapeError("lstm: rows not divisible by batch");
  const std::size_t len = rows / batch;
  const std::size_t h = wh.value().rows();
  Var pre = num::affine(x, wx, b);
  LstmState s{tape.constant(Tensor({batch, h})), tape.constant(Tensor({batch, h}))};
  std::vector<Var> out(len);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    Var z = num::add(num::slice_rows(pre, t * batch, (t + 1) * batch), num::matmul(s.h, wh));
    s = lstm_gates(z, s.c);
    out[t] = s.h;
  }
  return len == 1 ? out[0] : num::concat_rows(out);
}

}  // namespace phiscrub::taggers
