#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "tsfm/error.hpp"

namespace tsfm {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update in place. `step` counts from 1.
template <typename Real>
void adam_update(std::span<Real> params, std::span<const Real> grad,
                 std::span<Real> first_moment, std::span<Real> second_moment,
                 std::uint64_t step, double lr, const AdamOptions& options = {}) {
  if (grad.size() != params.size() || first_moment.size() != params.size() ||
      second_moment.size() != params.size()) {
    throw ShapeError("adam_update: tensor sizes differ");
  }
  const double t = static_cast<double>(step);
  const Real b1 = static_cast<Real>(options.beta1);
  const Real b2 = static_cast<Real>(options.beta2);
  const Real correction1 = static_cast<Real>(1.0 - std::pow(options.beta1, t));
  const Real correction2 = static_cast<Real>(1.0 - std::pow(options.beta2, t));
  const Real rate = static_cast<Real>(lr);
  const Real eps = static_cast<Real>(options.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real g = grad[i];
    first_moment[i] = b1 * first_moment[i] + (Real{1} - b1) * g;
    second_moment[i] = b2 * second_moment[i] + (Real{1} - b2) * g * g;
    const Real m_hat = first_moment[i] / correction1;
    const Real v_hat = second_moment[i] / correction2;
    params[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace tsfm
