#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tsfm/matrix.hpp"

namespace tsfm {

using Rng = std::mt19937_64;

/// Learnable parameters of one temporal structure filter: N Cauchy
/// distributions, each with an unconstrained center and width parameter.
template <typename Real>
struct FilterParams {
  std::vector<Real> centers;
  std::vector<Real> widths;

  FilterParams() = default;
  explicit FilterParams(std::size_t distributions)
      : centers(distributions, Real{0}), widths(distributions, Real{0}) {}

  std::size_t size() const noexcept { return centers.size(); }

  template <typename U>
  FilterParams<U> cast() const {
    FilterParams<U> out(size());
    for (std::size_t n = 0; n < size(); ++n) {
      out.centers[n] = static_cast<U>(centers[n]);
      out.widths[n] = static_cast<U>(widths[n]);
    }
    return out;
  }

  bool operator==(const FilterParams&) const = default;
};

/// A filter evaluated at a concrete sequence length.
///
/// `values(t, n)` is the weight of frame t under distribution n. Each column
/// is a discrete probability vector over frames.
template <typename Real>
struct MaterializedFilter {
  Matrix<Real> values;             // length x N
  std::vector<Real> centers_hat;   // frame units, in [0, length - 1]
  std::vector<Real> widths_hat;    // in (1/e, e]
  std::vector<Real> norm;          // per-column sum of the raw density

  std::size_t length() const noexcept { return values.rows(); }
  std::size_t size() const noexcept { return values.cols(); }
};

/// Evaluates the normalized Cauchy filter bank at `length` frames.
///
/// Centers map through (length - 1) * (tanh(x) + 1) / 2 and widths through
/// exp(1 - 2 |tanh(gamma)|). Throws std::invalid_argument for length 0 and
/// NumericError for non-finite parameters.
template <typename Real>
MaterializedFilter<Real> materialize_filter(const FilterParams<Real>& params,
                                            std::size_t length);

/// Gradient of sum(upstream .* F) with respect to the filter parameters,
/// reusing an already materialized filter.
template <typename Real>
FilterParams<Real> filter_backward(const FilterParams<Real>& params,
                                   const MaterializedFilter<Real>& filter,
                                   const Matrix<Real>& upstream);

template <typename Real>
FilterParams<Real> filter_backward(const FilterParams<Real>& params,
                                   std::size_t length,
                                   const Matrix<Real>& upstream);

/// Centers and widths drawn from Uniform(-0.5, 0.5).
template <typename Real>
FilterParams<Real> init_filter(std::size_t distributions, Rng& rng) {
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  FilterParams<Real> params(distributions);
  for (std::size_t n = 0; n < distributions; ++n) {
    params.centers[n] = static_cast<Real>(uniform(rng));
    params.widths[n] = static_cast<Real>(uniform(rng));
  }
  return params;
}

}  // namespace tsfm
