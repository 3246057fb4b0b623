#pragma once

// Linear-chain CRF scoring: Viterbi decoding and the negative
// log-likelihood with its forward-backward gradient.
//
// A path y over T positions scores
//   start[y0] + sum_t emit[t][y_t] + sum_t trans[y_t][y_{t+1}] + end[y_{T-1}]
// where trans[i][j] is the score of tag j following tag i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "phiscrub/numerics/tape.hpp"

namespace phiscrub::taggers {

using num::Tensor;
using num::Var;

namespace detail {

inline void check_crf_shapes(const Tensor& emissions, const Tensor& trans, const Tensor& start, const Tensor& end) {
  const std::size_t k = trans.rows();
  if (trans.rank() != 2 || trans.cols() != k || start.size() != k || end.size() != k || emissions.cols() != k) {
    throw ShapeError("crf: emissions/transition/start/end sizes disagree");
  }
}

inline double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

// out[k] = log sum_j exp(prev[j] + trans[j][k]) in exp space with scaling;
// falls back to the exact log-space sum for a column that underflows.
// exp_trans holds exp(trans - trans_max).
inline void log_matvec(const std::vector<double>& prev, const Tensor& trans, const Tensor& exp_trans, double trans_max,
                       std::vector<double>& out) {
  const std::size_t k = prev.size();
  const double m = *std::max_element(prev.begin(), prev.end());
  std::vector<double> scaled(k);
  for (std::size_t j = 0; j < k; ++j) scaled[j] = std::exp(prev[j] - m);
  out.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double sj = scaled[j];
    if (sj == 0.0) continue;
    const double* row = exp_trans.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) out[c] += sj * row[c];
  }
  std::vector<double> terms;
  for (std::size_t c = 0; c < k; ++c) {
    if (out[c] > 1e-280 && std::isfinite(out[c])) {
      out[c] = m + trans_max + std::log(out[c]);
      continue;
    }
    terms.resize(k);
    for (std::size_t j = 0; j < k; ++j) terms[j] = prev[j] + trans.at(j, c);
    out[c] = log_sum_exp(terms.data(), k);
  }
}

inline Tensor exp_shifted(const Tensor& trans, double& shift) {
  shift = *std::max_element(trans.values().begin(), trans.values().end());
  Tensor e(trans.shape());
  for (std::size_t i = 0; i < trans.size(); ++i) e[i] = std::exp(trans[i] - shift);
  return e;
}

}  // namespace detail

// Highest-scoring tag path for emissions [T, K]. Among equally scoring
// paths the lexicographically smallest tag-id sequence is returned.
inline std::vector<std::size_t> viterbi_decode(const Tensor& emissions, const Tensor& trans, const Tensor& start,
                                               const Tensor& end) {
  detail::check_crf_shapes(emissions, trans, start, end);
  const std::size_t len = emissions.rows();
  const std::size_t k = trans.rows();
  if (len == 0) throw InvalidArgument("viterbi_decode: empty sequence");
  // best[t][j]: best score of positions t..T-1 given tag j at t. Decoding
  // then walks forward picking the smallest tag that stays optimal.
  std::vector<double> best(len * k);
  for (std::size_t j = 0; j < k; ++j) best[(len - 1) * k + j] = emissions.at(len - 1, j) + end[j];
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t j = 0; j < k; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) m = std::max(m, trans.at(j, c) + best[(t + 1) * k + c]);
      best[t * k + j] = emissions.at(t, j) + m;
    }
  }
  std::vector<std::size_t> path(len);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double v = start[j] + best[j];
    if (v > top) {
      top = v;
      path[0] = j;
    }
  }
  for (std::size_t t = 1; t < len; ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double v = trans.at(path[t - 1], c) + best[t * k + c];
      if (v > m) {
        m = v;
        path[t] = c;
      }
    }
  }
  return path;
}

inline double path_score(const Tensor& emissions, const Tensor& trans, const Tensor& start, const Tensor& end,
                         const std::vector<std::size_t>& path) {
  double s = start[path.front()] + end[path.back()];
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += emissions.at(t, path[t]);
    if (t + 1 < path.size()) s += trans.at(path[t], path[t + 1]);
  }
  return s;
}

// log of the sum over all paths of exp(score), via the forward algorithm.
inline double crf_log_partition(const Tensor& emissions, const Tensor& trans, const Tensor& start, const Tensor& end) {
  detail::check_crf_shapes(emissions, trans, start, end);
  const std::size_t len = emissions.rows();
  const std::size_t k = trans.rows();
  if (len == 0) throw InvalidArgument("crf_log_partition: empty sequence");
  double shift = 0.0;
  const Tensor et = detail::exp_shifted(trans, shift);
  std::vector<double> alpha(k), next;
  for (std::size_t j = 0; j < k; ++j) alpha[j] = start[j] + emissions.at(0, j);
  for (std::size_t t = 1; t < len; ++t) {
    detail::log_matvec(alpha, trans, et, shift, next);
    for (std::size_t j = 0; j < k; ++j) alpha[j] = next[j] + emissions.at(t, j);
  }
  for (std::size_t j = 0; j < k; ++j) alpha[j] += end[j];
  return detail::log_sum_exp(alpha.data(), k);
}

// Mean CRF negative log-likelihood over a batch. emissions is [T * B, K]
// time-major; gold[b] holds the T gold tag ids of sequence b.
inline Var crf_nll(Var emissions, Var trans, Var start, Var end, const std::vector<std::vector<std::size_t>>& gold) {
  const Tensor& ev = emissions.value();
  const Tensor& tv = trans.value();
  detail::check_crf_shapes(ev, tv, start.value(), end.value());
  const std::size_t batch = gold.size();
  if (batch == 0 || ev.rows() % batch != 0) throw ShapeError("crf_nll: rows not divisible by batch");
  const std::size_t len = ev.rows() / batch;
  const std::size_t k = tv.rows();
  if (len == 0) throw InvalidArgument("crf_nll: empty sequence");
  for (const auto& g : gold) {
    if (g.size() != len) throw ShapeError("crf_nll: gold length differs from emissions");
    for (std::size_t y : g) {
      if (y >= k) throw InvalidArgument("crf_nll: gold tag out of range");
    }
  }
  const Tensor& sv = start.value();
  const Tensor& nv = end.value();
  double shift = 0.0;
  const Tensor et = detail::exp_shifted(tv, shift);

  // Forward (alpha) and backward (beta) log messages per sequence.
  std::vector<double> alpha(len * batch * k), beta(len * batch * k), log_z(batch);
  const auto at = [&](std::vector<double>& m, std::size_t t, std::size_t b) { return m.data() + (t * batch + b) * k; };
  double total = 0.0;
  std::vector<double> prev(k), next;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < k; ++j) at(alpha, 0, b)[j] = sv[j] + ev.at(b, j);
    for (std::size_t t = 1; t < len; ++t) {
      prev.assign(at(alpha, t - 1, b), at(alpha, t - 1, b) + k);
      detail::log_matvec(prev, tv, et, shift, next);
      for (std::size_t j = 0; j < k; ++j) at(alpha, t, b)[j] = next[j] + ev.at(t * batch + b, j);
    }
    std::vector<double> fin(at(alpha, len - 1, b), at(alpha, len - 1, b) + k);
    for (std::size_t j = 0; j < k; ++j) fin[j] += nv[j];
    log_z[b] = detail::log_sum_exp(fin.data(), k);

    // beta[t][j] = log sum_c exp(trans[j][c] + emit[t+1][c] + beta[t+1][c])
    for (std::size_t j = 0; j < k; ++j) at(beta, len - 1, b)[j] = nv[j];
    std::vector<double> msg(k);
    for (std::size_t t = len - 1; t-- > 0;) {
      for (std::size_t c = 0; c < k; ++c) msg[c] = ev.at((t + 1) * batch + b, c) + at(beta, t + 1, b)[c];
      const double m = *std::max_element(msg.begin(), msg.end());
      std::vector<double> scaled(k);
      for (std::size_t c = 0; c < k; ++c) scaled[c] = std::exp(msg[c] - m);
      for (std::size_t j = 0; j < k; ++j) {
        const double* row = et.data() + j * k;
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += row[c] * scaled[c];
        if (s > 1e-280 && std::isfinite(s)) {
          at(beta, t, b)[j] = m + shift + std::log(s);
        } else {
          std::vector<double> terms(k);
          for (std::size_t c = 0; c < k; ++c) terms[c] = tv.at(j, c) + msg[c];
          at(beta, t, b)[j] = detail::log_sum_exp(terms.data(), k);
        }
      }
    }

    std::vector<std::size_t> path = gold[b];
    double gold_score = sv[path.front()] + nv[path.back()];
    for (std::size_t t = 0; t < len; ++t) {
      gold_score += ev.at(t * batch + b, path[t]);
      if (t + 1 < len) gold_score += tv.at(path[t], path[t + 1]);
    }
    total += log_z[b] - gold_score;
  }
  const double loss = total / static_cast<double>(batch);

  return emissions.tape->push(
      Tensor::scalar(loss), {emissions, trans, start, end},
      [emissions, trans, start, end, gold, alpha = std::move(alpha), beta = std::move(beta), log_z, len, batch, k, et,
       shift](num::Tape& tape, std::size_t self) {
        const double g = tape.grad(self)[0] / static_cast<double>(batch);
        const Tensor& ev2 = tape.value(emissions);
        const auto a = [&](std::size_t t, std::size_t b) { return alpha.data() + (t * batch + b) * k; };
        const auto bt = [&](std::size_t t, std::size_t b) { return beta.data() + (t * batch + b) * k; };
        Tensor d_emit(ev2.shape());
        Tensor d_trans({k, k});
        Tensor d_start({k});
        Tensor d_end({k});
        std::vector<double> left(k), right(k);
        for (std::size_t b = 0; b < batch; ++b) {
          const double lz = log_z[b];
          for (std::size_t t = 0; t < len; ++t) {
            const double* at_ = a(t, b);
            const double* bt_ = bt(t, b);
            for (std::size_t j = 0; j < k; ++j) {
              const double marg = std::exp(at_[j] + bt_[j] - lz);
              d_emit.at(t * batch + b, j) += marg;
              if (t == 0) d_start[j] += marg;
              if (t + 1 == len) d_end[j] += marg;
            }
            const std::size_t y = gold[b][t];
            d_emit.at(t * batch + b, y) -= 1.0;
            if (t == 0) d_start[y] -= 1.0;
            if (t + 1 == len) d_end[y] -= 1.0;
            if (t + 1 == len) continue;
            // pair[j][c] = exp(alpha[t][j] + trans[j][c] + emit[t+1][c] + beta[t+1][c] - logZ)
            const double* bn = bt(t + 1, b);
            double ml = -std::numeric_limits<double>::infinity();
            double mr = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
              left[j] = at_[j];
              right[j] = ev2.at((t + 1) * batch + b, j) + bn[j];
              ml = std::max(ml, left[j]);
              mr = std::max(mr, right[j]);
            }
            const double scale = std::exp(ml + mr + shift - lz);
            for (std::size_t j = 0; j < k; ++j) left[j] = std::exp(left[j] - ml);
            for (std::size_t c = 0; c < k; ++c) right[c] = std::exp(right[c] - mr);
            for (std::size_t j = 0; j < k; ++j) {
              const double lj = left[j] * scale;
              if (lj == 0.0) continue;
              const double* row = et.data() + j * k;
              double* dt = d_trans.data() + j * k;
              for (std::size_t c = 0; c < k; ++c) dt[c] += lj * row[c] * right[c];
            }
            d_trans.at(gold[b][t], gold[b][t + 1]) -= 1.0;
          }
        }
        const auto accumulate = [g](Tensor& dst, const Tensor& src) {
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] += g * src[i];
        };
        if (tape.needs_grad(emissions)) accumulate(tape.grad(emissions), d_emit);
        if (tape.needs_grad(trans)) accumulate(tape.grad(trans), d_trans);
        if (tape.needs_grad(start)) accumulate(tape.grad(start), d_start);
        if (tape.needs_grad(end)) accumulate(tape.grad(end), d_end);
      });
}

}  // namespace phiscrub::taggers
