#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phiscrub/numerics/random.hpp"
#include "phiscrub/numerics/tape.hpp"

namespace phiscrub::num {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Check at most this many randomly chosen coordinates per parameter.
  std::optional<std::size_t> max_coordinates_per_parameter;
  std::uint64_t seed = 0;
  // Coordinates above retry_above are re-differenced with each retry step;
  // the closest agreement counts (roundoff on tiny gradients, relu kinks).
  double retry_above = 1e-6;
  std::vector<double> retry_steps{1e-3, 1e-4, 1e-6, 1e-7};
};

// Compares recorded gradients of a scalar function against central finite
// differences. Relative error per coordinate is
//   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
// and the maximum over all checked coordinates is returned.
inline GradCheckResult grad_check(const std::function<Var(Tape&)>& f, const std::vector<Parameter*>& params,
                                  const GradCheckOptions& opts = {}) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  const auto evaluate = [&] {
    Tape tape(false);
    const double v = f(tape).value()[0];
    if (!std::isfinite(v)) throw InvalidArgument("grad_check: non-finite function value");
    return v;
  };

  GradCheckResult result;
  Rng rng(opts.seed);
  for (Parameter* p : params) {
    for (double g : p->grad.values()) {
      if (!std::isfinite(g)) throw InvalidArgument("grad_check: non-finite gradient in " + p->name);
    }
    std::vector<std::size_t> coords(p->value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opts.max_coordinates_per_parameter && coords.size() > *opts.max_coordinates_per_parameter) {
      rng.shuffle(coords);
      coords.resize(*opts.max_coordinates_per_parameter);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double ad = p->grad[i];
      const auto central = [&](double h) {
        const double saved = p->value[i];
        p->value[i] = saved + h;
        const double up = evaluate();
        p->value[i] = saved - h;
        const double down = evaluate();
        p->value[i] = saved;
        return (up - down) / (2.0 * h);
      };
      const auto rel_error = [ad](double fd) { return std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd)); };
      double fd = central(opts.epsilon);
      double rel = rel_error(fd);
      for (std::size_t k = 0; rel > opts.retry_above && k < opts.retry_steps.size(); ++k) {
        const double alt = central(opts.retry_steps[k]);
        if (rel_error(alt) < rel) {
          fd = alt;
          rel = rel_error(alt);
        }
      }
      ++result.coordinates_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.worst_analytic = ad;
        result.worst_numeric = fd;
      }
    }
  }
  return result;
}

}  // namespace phiscrub::num
