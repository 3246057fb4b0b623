#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "phiscrub/numerics/tape.hpp"

namespace phiscrub::num {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators, one pair per parameter tensor.
struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step = 0;

  explicit OptimizerState(AdamConfig c = {}) : config(c) {}
};

namespace detail {

inline void prepare_moments(OptimizerState& st, std::span<Tensor* const> params,
                            std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: params/grads count mismatch");
  if (st.first_moment.empty()) {
    for (const Tensor* p : params) {
      st.first_moment.push_back(Tensor::zeros_like(*p));
      st.second_moment.push_back(Tensor::zeros_like(*p));
    }
  }
  if (st.first_moment.size() != params.size()) throw ShapeError("optimizer: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != st.first_moment[i].shape()) {
      throw ShapeError("optimizer: shape mismatch for parameter " + std::to_string(i));
    }
  }
}

}  // namespace detail

// Adam with bias correction.
inline void adam_step(OptimizerState& st, std::span<Tensor* const> params,
                      std::span<const Tensor* const> grads) {
  detail::prepare_moments(st, params, grads);
  ++st.step;
  const AdamConfig& c = st.config;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i]->data();
    double* m = st.first_moment[i].data();
    double* v = st.second_moment[i].data();
    for (std::size_t k = 0; k < params[i]->size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

// Adam with a Nesterov look-ahead on the first moment:
//   m_hat = b1 * m_t / (1 - b1^(t+1)) + (1 - b1) * g_t / (1 - b1^t)
inline void nadam_step(OptimizerState& st, std::span<Tensor* const> params,
                       std::span<const Tensor* const> grads) {
  detail::prepare_moments(st, params, grads);
  ++st.step;
  const AdamConfig& c = st.config;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c1_next = 1.0 - std::pow(c.beta1, t + 1.0);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i]->data();
    double* m = st.first_moment[i].data();
    double* v = st.second_moment[i].data();
    for (std::size_t k = 0; k < params[i]->size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = c.beta1 * m[k] / c1_next + (1.0 - c.beta1) * g[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

enum class OptimizerKind { kAdam, kNadam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "nadam"; }

// Steps the trainable parameters of a model from their accumulated grads.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamConfig config, std::vector<Parameter*> params)
      : kind_(kind), state_(config) {
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      params_.push_back(p);
      values_.push_back(&p->value);
      grads_.push_back(&p->grad);
    }
  }

  void step() {
    if (kind_ == OptimizerKind::kAdam) {
      adam_step(state_, values_, grads_);
    } else {
      nadam_step(state_, values_, grads_);
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  const OptimizerState& state() const noexcept { return state_; }

 private:
  OptimizerKind kind_;
  OptimizerState state_;
  std::vector<Parameter*> params_;
  std::vector<Tensor*> values_;
  std::vector<const Tensor*> grads_;
};

}  // namespace phiscrub::num
