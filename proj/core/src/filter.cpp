#include "tsfm/filter.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "tsfm/error.hpp"

namespace tsfm {
namespace {

template <typename Real>
void require_finite(const FilterParams<Real>& params) {
  if (params.widths.size() != params.centers.size()) {
    throw ShapeError("filter params: centers and widths differ in size");
  }
  for (std::size_t n = 0; n < params.size(); ++n) {
    if (!std::isfinite(params.centers[n]) || !std::isfinite(params.widths[n])) {
      throw NumericError("filter params: non-finite value in distribution " +
                         std::to_string(n));
    }
  }
}

}  // namespace

template <typename Real>
MaterializedFilter<Real> materialize_filter(const FilterParams<Real>& params,
                                            std::size_t length) {
  if (length == 0) {
    throw std::invalid_argument("materialize_filter: length must be >= 1");
  }
  require_finite(params);

  const std::size_t count = params.size();
  const Real span = static_cast<Real>(length - 1);
  const Real pi = std::numbers::pi_v<Real>;

  MaterializedFilter<Real> out;
  out.values = Matrix<Real>(length, count);
  out.centers_hat.resize(count);
  out.widths_hat.resize(count);
  out.norm.resize(count);

  for (std::size_t n = 0; n < count; ++n) {
    const Real center = span * (std::tanh(params.centers[n]) + Real{1}) / Real{2};
    const Real width =
        std::exp(Real{1} - Real{2} * std::abs(std::tanh(params.widths[n])));
    out.centers_hat[n] = center;
    out.widths_hat[n] = width;

    // Single precision columns are built in double so they sum to one
    // within a few ulps even for long sequences.
    using Acc = std::conditional_t<(sizeof(Real) < sizeof(double)), double, Real>;
    std::vector<Acc> density(length);
    Acc total{0};
    for (std::size_t t = 0; t < length; ++t) {
      const Acc r = (static_cast<Acc>(t) - static_cast<Acc>(center)) / static_cast<Acc>(width);
      density[t] = Acc{1} / (static_cast<Acc>(pi) * static_cast<Acc>(width) * (Acc{1} + r * r));
      total += density[t];
    }
    out.norm[n] = static_cast<Real>(total);
    for (std::size_t t = 0; t < length; ++t) {
      out.values(t, n) = static_cast<Real>(density[t] / total);
    }
  }
  return out;
}

template <typename Real>
FilterParams<Real> filter_backward(const FilterParams<Real>& params,
                                   const MaterializedFilter<Real>& filter,
                                   const Matrix<Real>& upstream) {
  const std::size_t length = filter.length();
  const std::size_t count = params.size();
  if (upstream.rows() != length || upstream.cols() != count ||
      filter.size() != count) {
    throw ShapeError("filter_backward: upstream must be " +
                     std::to_string(length) + "x" + std::to_string(count));
  }

  const Real half_span = static_cast<Real>(length - 1) / Real{2};
  FilterParams<Real> grad(count);

  for (std::size_t n = 0; n < count; ++n) {
    const Real center = filter.centers_hat[n];
    const Real width = filter.widths_hat[n];
    const Real z = filter.norm[n];

    // dL/dg[t] = (U[t] - sum_s U[s] F[s]) / Z accounts for Z depending on g.
    Real mean_upstream{0};
    for (std::size_t t = 0; t < length; ++t) {
      mean_upstream += upstream(t, n) * filter.values(t, n);
    }

    Real d_center{0};
    Real d_width{0};
    const Real width2 = width * width;
    for (std::size_t t = 0; t < length; ++t) {
      const Real dg = (upstream(t, n) - mean_upstream) / z;
      const Real g = filter.values(t, n) * z;
      const Real d = static_cast<Real>(t) - center;
      const Real q = width2 + d * d;
      d_center += dg * g * Real{2} * d / q;
      d_width += dg * g * (d * d - width2) / (width * q);
    }

    const Real tc = std::tanh(params.centers[n]);
    const Real tw = std::tanh(params.widths[n]);
    // Subgradient 0 for |tanh| at gamma = 0.
    const Real sign = tw > Real{0} ? Real{1} : (tw < Real{0} ? Real{-1} : Real{0});
    grad.centers[n] = d_center * half_span * (Real{1} - tc * tc);
    grad.widths[n] = d_width * width * Real{-2} * sign * (Real{1} - tw * tw);
  }
  return grad;
}

template <typename Real>
FilterParams<Real> filter_backward(const FilterParams<Real>& params,
                                   std::size_t length,
                                   const Matrix<Real>& upstream) {
  return filter_backward(params, materialize_filter(params, length), upstream);
}

#define TSFM_INSTANTIATE(Real)                                                \
  template MaterializedFilter<Real> materialize_filter(                       \
      const FilterParams<Real>&, std::size_t);                                \
  template FilterParams<Real> filter_backward(                                \
      const FilterParams<Real>&, const MaterializedFilter<Real>&,             \
      const Matrix<Real>&);                                                   \
  template FilterParams<Real> filter_backward(const FilterParams<Real>&,      \
                                              std::size_t, const Matrix<Real>&);

TSFM_INSTANTIATE(float)
TSFM_INSTANTIATE(double)
TSFM_INSTANTIATE(long double)
#undef TSFM_INSTANTIATE

}  // namespace tsfm
