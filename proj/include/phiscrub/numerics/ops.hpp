#pragma once

// Differentiable operations recorded on a Tape. Matrices are rank-2
// tensors [rows, cols]; sequence batches are laid out time-major, i.e. row
// t * batch + b holds position t of sequence b.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "phiscrub/numerics/tape.hpp"

namespace phiscrub::num {

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace detail

inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank2(av, "matmul");
  detail::require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  out.mat().noalias() = av.mat() * bv.mat();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a).mat().noalias() += g.mat() * t.value(b).mat().transpose();
    if (t.needs_grad(b)) t.grad(b).mat().noalias() += t.value(a).mat().transpose() * g.mat();
  });
}

// x[n,in] * W[in,out] + b[out]
inline Var affine(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require_rank2(xv, "affine");
  detail::require_rank2(wv, "affine");
  if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw ShapeError("affine: shape mismatch x" + shape_string(xv.shape()) + " W" +
                     shape_string(wv.shape()) + " b" + shape_string(bv.shape()));
  }
  Tensor out({xv.rows(), wv.cols()});
  auto o = out.mat();
  o.noalias() = xv.mat() * wv.mat();
  const Eigen::Map<const Eigen::RowVectorXd> bias(bv.data(), detail::ix(bv.size()));
  o.rowwise() += bias;
  return x.tape->push(std::move(out), {x, w, b}, [x, w, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(x)) t.grad(x).mat().noalias() += g.mat() * t.value(w).mat().transpose();
    if (t.needs_grad(w)) t.grad(w).mat().noalias() += t.value(x).mat().transpose() * g.mat();
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), detail::ix(gb.size())) += g.mat().colwise().sum();
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) += g;
  });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad(a);
      const Tensor& bv2 = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      const Tensor& av2 = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

namespace detail {

// Elementwise op whose derivative is expressed through its output.
template <typename F, typename DF>
Var unary_from_output(Var x, F f, DF dfdy) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return x.tape->push(std::move(out), {x}, [x, dfdy](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdy(y[i]);
  });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var sigmoid(Var x) {
  return detail::unary_from_output(x, detail::sigmoid_scalar, [](double y) { return y * (1.0 - y); });
}

inline Var tanh(Var x) {
  return detail::unary_from_output(x, [](double v) { return std::tanh(v); },
                                   [](double y) { return 1.0 - y * y; });
}

inline Var relu(Var x) {
  return detail::unary_from_output(x, [](double v) { return v > 0.0 ? v : 0.0; },
                                   [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

// Columns [c0, c1) of a matrix.
inline Var slice_cols(Var x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "slice_cols");
  if (c0 >= c1 || c1 > xv.cols()) throw ShapeError("slice_cols: bad range");
  Tensor out({xv.rows(), c1 - c0});
  out.mat() = xv.mat().middleCols(detail::ix(c0), detail::ix(c1 - c0));
  return x.tape->push(std::move(out), {x}, [x, c0, c1](Tape& t, std::size_t self) {
    t.grad(x).mat().middleCols(detail::ix(c0), detail::ix(c1 - c0)) += t.grad(self).mat();
  });
}

// Rows [r0, r1) of a matrix.
inline Var slice_rows(Var x, std::size_t r0, std::size_t r1) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "slice_rows");
  if (r0 >= r1 || r1 > xv.rows()) throw ShapeError("slice_rows: bad range");
  const std::size_t c = xv.cols();
  Tensor out({r1 - r0, c});
  std::copy(xv.data() + r0 * c, xv.data() + r1 * c, out.data());
  return x.tape->push(std::move(out), {x}, [x, r0, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    double* dst = t.grad(x).data() + r0 * c;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

inline Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = xs[0].value().rows();
  std::size_t cols = 0;
  for (const Var& v : xs) {
    detail::require_rank2(v.value(), "concat_cols");
    if (v.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += v.value().cols();
  }
  Tensor out({rows, cols});
  std::size_t c = 0;
  for (const Var& v : xs) {
    out.mat().middleCols(detail::ix(c), detail::ix(v.value().cols())) = v.value().mat();
    c += v.value().cols();
  }
  return xs[0].tape->push(std::move(out), xs, [xs](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t c0 = 0;
    for (const Var& v : xs) {
      const std::size_t w = t.value(v).cols();
      if (t.needs_grad(v)) t.grad(v).mat() += g.mat().middleCols(detail::ix(c0), detail::ix(w));
      c0 += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = xs[0].value().cols();
  std::size_t rows = 0;
  for (const Var& v : xs) {
    detail::require_rank2(v.value(), "concat_rows");
    if (v.value().cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += v.value().rows();
  }
  Tensor out({rows, cols});
  double* dst = out.data();
  for (const Var& v : xs) dst = std::copy(v.value().data(), v.value().data() + v.value().size(), dst);
  return xs[0].tape->push(std::move(out), xs, [xs](Tape& t, std::size_t self) {
    const double* src = t.grad(self).data();
    for (const Var& v : xs) {
      const std::size_t n = t.value(v).size();
      if (t.needs_grad(v)) {
        double* gv = t.grad(v).data();
        for (std::size_t i = 0; i < n; ++i) gv[i] += src[i];
      }
      src += n;
    }
  });
}

// Embedding lookup: row `indices[i]` of `table`; a negative index yields a
// zero row (padding).
inline Var gather_rows(Var table, std::vector<long> indices) {
  const Tensor& tv = table.value();
  detail::require_rank2(tv, "gather_rows");
  const std::size_t c = tv.cols();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const long k = indices[i];
    if (k < 0) continue;
    if (static_cast<std::size_t>(k) >= tv.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(tv.data() + k * c, tv.data() + (k + 1) * c, out.data() + i * c);
  }
  return table.tape->push(std::move(out), {table},
                          [table, idx = std::move(indices), c](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            Tensor& gt = t.grad(table);
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              if (idx[i] < 0) continue;
                              double* dst = gt.data() + static_cast<std::size_t>(idx[i]) * c;
                              for (std::size_t j = 0; j < c; ++j) dst[j] += g[i * c + j];
                            }
                          });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->push(Tensor::scalar(s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(x).values()) v += g;
  });
}

// Scalar sum(x * weights) for a fixed weight tensor.
inline Var weighted_sum(Var x, Tensor weights) {
  detail::require_same_shape(x.value(), weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
  return x.tape->push(Tensor::scalar(s), {x}, [x, w = std::move(weights)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
}

struct SoftmaxCrossEntropy {
  Var loss;       // mean negative log-probability of the gold classes
  Tensor probs;   // [n, k] row-wise softmax
};

// Row-wise softmax plus mean cross-entropy against gold class indices.
inline SoftmaxCrossEntropy softmax_cross_entropy(Var logits, const std::vector<std::size_t>& gold) {
  const Tensor& lv = logits.value();
  detail::require_rank2(lv, "softmax_cross_entropy");
  const std::size_t n = lv.rows();
  const std::size_t k = lv.cols();
  if (gold.size() != n) throw ShapeError("softmax_cross_entropy: gold length differs from rows");
  Tensor probs({n, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (gold[r] >= k) throw InvalidArgument("softmax_cross_entropy: gold index out of range");
    const double* row = lv.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs.at(r, j) = std::exp(row[j] - log_z);
    loss += log_z - row[gold[r]];
  }
  loss /= static_cast<double>(n);
  Var out = logits.tape->push(Tensor::scalar(loss), {logits},
                              [logits, probs, gold](Tape& t, std::size_t self) {
                                const double g = t.grad(self)[0] / static_cast<double>(gold.size());
                                Tensor& gl = t.grad(logits);
                                const std::size_t kk = probs.cols();
                                for (std::size_t r = 0; r < gold.size(); ++r) {
                                  for (std::size_t j = 0; j < kk; ++j) {
                                    const double target = j == gold[r] ? 1.0 : 0.0;
                                    gl[r * kk + j] += g * (probs.at(r, j) - target);
                                  }
                                }
                              });
  return {out, std::move(probs)};
}

// Geometry of a same-padded dilated 1-D convolution.
struct DilatedConvSpec {
  std::size_t width = 3;
  std::size_t dilation = 1;
  std::size_t filters = 1;

  void validate() const {
    if (width == 0 || width % 2 == 0) throw InvalidArgument("DilatedConvSpec: width must be odd");
    if (dilation == 0) throw InvalidArgument("DilatedConvSpec: dilation must be >= 1");
    if (filters == 0) throw InvalidArgument("DilatedConvSpec: filters must be >= 1");
  }

  // Tokens visible to one output after stacking layers of this width with
  // the given dilations.
  static std::size_t receptive_field(std::size_t width, const std::vector<std::size_t>& dilations) {
    std::size_t rf = 1;
    for (std::size_t d : dilations) rf += (width - 1) * d;
    return rf;
  }
};

// out[t] = b + sum_j x[t + (j - width/2) * d] * W[j], zero outside the
// sequence. x is [len * batch, in] time-major, W is [width, in, out].
inline Var conv1d_dilated(Var x, Var w, Var b, const DilatedConvSpec& spec, std::size_t batch = 1) {
  spec.validate();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  detail::require_rank2(xv, "conv1d_dilated");
  if (batch == 0 || xv.rows() % batch != 0) throw ShapeError("conv1d_dilated: rows not divisible by batch");
  const std::size_t in = xv.cols();
  if (wv.rank() != 3 || wv.shape()[0] != spec.width || wv.shape()[1] != in ||
      wv.shape()[2] != spec.filters || b.value().size() != spec.filters) {
    throw ShapeError("conv1d_dilated: weight shape " + shape_string(wv.shape()) + " does not match input " +
                     shape_string(xv.shape()) + " and spec");
  }
  const std::size_t n = xv.rows();
  const std::size_t out_ch = spec.filters;
  const long half = static_cast<long>(spec.width / 2);

  // Row range [r0, r1) of the output that tap j can reach, and the shift.
  struct Tap {
    std::size_t r0, r1;
    long shift;
  };
  std::vector<Tap> taps;
  for (std::size_t j = 0; j < spec.width; ++j) {
    const long shift = (static_cast<long>(j) - half) * static_cast<long>(spec.dilation) * static_cast<long>(batch);
    const long lo = std::max(0L, -shift);
    const long hi = std::min(static_cast<long>(n), static_cast<long>(n) - shift);
    if (lo < hi) taps.push_back({static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), shift});
    else taps.push_back({0, 0, shift});
  }

  Tensor out({n, out_ch});
  auto o = out.mat();
  const Eigen::Map<const Eigen::RowVectorXd> bias(b.value().data(), detail::ix(out_ch));
  o.rowwise() = bias;
  const auto tap_weights = [in, out_ch](const Tensor& wt, std::size_t j) {
    return ConstMatrixMap(wt.data() + j * in * out_ch, detail::ix(in), detail::ix(out_ch));
  };
  for (std::size_t j = 0; j < taps.size(); ++j) {
    const Tap& tp = taps[j];
    if (tp.r0 >= tp.r1) continue;
    const auto len = detail::ix(tp.r1 - tp.r0);
    o.middleRows(detail::ix(tp.r0), len).noalias() +=
        xv.mat().middleRows(detail::ix(tp.r0) + tp.shift, len) * tap_weights(wv, j);
  }
  return x.tape->push(std::move(out), {x, w, b}, [x, w, b, taps, in, out_ch, tap_weights](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv2 = t.value(x);
    const Tensor& wv2 = t.value(w);
    for (std::size_t j = 0; j < taps.size(); ++j) {
      const Tap& tp = taps[j];
      if (tp.r0 >= tp.r1) continue;
      const auto len = detail::ix(tp.r1 - tp.r0);
      const auto g_rows = g.mat().middleRows(detail::ix(tp.r0), len);
      if (t.needs_grad(x)) {
        t.grad(x).mat().middleRows(detail::ix(tp.r0) + tp.shift, len).noalias() +=
            g_rows * tap_weights(wv2, j).transpose();
      }
      if (t.needs_grad(w)) {
        MatrixMap gw(t.grad(w).data() + j * in * out_ch, detail::ix(in), detail::ix(out_ch));
        gw.noalias() += xv2.mat().middleRows(detail::ix(tp.r0) + tp.shift, len).transpose() * g_rows;
      }
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), detail::ix(gb.size())) += g.mat().colwise().sum();
    }
  });
}

// Per-sequence maximum over positions. x is [len * batch, ch] time-major;
// only the first lengths[b] positions of sequence b take part (all positions
// when `lengths` is empty). Result is [batch, ch]. Gradient goes to the
// first position attaining the maximum.
inline Var max_pool_over_time(Var x, std::size_t batch, const std::vector<std::size_t>& lengths = {}) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "max_pool_over_time");
  if (batch == 0 || xv.rows() == 0 || xv.rows() % batch != 0) {
    throw ShapeError("max_pool_over_time: empty input or rows not divisible by batch");
  }
  const std::size_t len = xv.rows() / batch;
  const std::size_t ch = xv.cols();
  if (!lengths.empty() && lengths.size() != batch) throw ShapeError("max_pool_over_time: lengths size");
  Tensor out({batch, ch});
  std::vector<std::size_t> argmax(batch * ch, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t valid = lengths.empty() ? len : lengths[b];
    if (valid == 0 || valid > len) throw ShapeError("max_pool_over_time: invalid sequence length");
    for (std::size_t c = 0; c < ch; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_row = b;
      for (std::size_t p = 0; p < valid; ++p) {
        const std::size_t row = p * batch + b;
        const double v = xv.at(row, c);
        if (v > best) {
          best = v;
          best_row = row;
        }
      }
      out.at(b, c) = best;
      argmax[b * ch + c] = best_row;
    }
  }
  return x.tape->push(std::move(out), {x}, [x, argmax, ch](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i] * ch + i % ch] += g[i];
  });
}

// Single-sequence form: x [len, ch] -> [ch].
inline Var max_pool_over_time(Var x) {
  Var pooled = max_pool_over_time(x, 1);
  Tensor flat({pooled.value().size()}, pooled.value().values());
  return x.tape->push(std::move(flat), {pooled}, [pooled](Tape& t, std::size_t self) {
    t.grad(pooled) += t.grad(self);
  });
}

}  // namespace phiscrub::num
