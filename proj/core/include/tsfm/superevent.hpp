#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tsfm/filter.hpp"
#include "tsfm/matrix.hpp"

namespace tsfm {

/// Per-class attention logits over M shared filters (C x M).
template <typename Real>
struct AttentionWeights {
  Matrix<Real> logits;

  std::size_t classes() const noexcept { return logits.rows(); }
  std::size_t filters() const noexcept { return logits.cols(); }
};

/// Kernel length for the relative (per-frame) super-event. Must be odd.
struct RelativeConfig {
  std::size_t length = 15;

  void validate() const;
  std::size_t half() const noexcept { return length / 2; }
};

enum class BaselinePooling { kMax, kMean, kPyramid3 };

std::string_view to_string(BaselinePooling kind) noexcept;

/// Number of pooled segments produced by `kind` (1, 1 or 7).
std::size_t pooled_segments(BaselinePooling kind) noexcept;

/// Row-wise softmax of the logits, max-subtracted.
template <typename Real>
Matrix<Real> soft_attention(const AttentionWeights<Real>& weights);

/// Applies one filter to a T x D sequence. The result is distribution-major:
/// entry n * D + d is sum_t F(t, n) v(t, d).
template <typename Real>
std::vector<Real> pool_single(const MaterializedFilter<Real>& filter,
                              const Matrix<Real>& features);

/// Forward cache shared by the attended and relative poolings.
template <typename Real>
struct AttendedPooling {
  Matrix<Real> attention;  // C x M
  Matrix<Real> pooled;     // M x (N * D)
  Matrix<Real> rep;        // C x (N * D)
};

/// Relative pooling keeps one pooled vector per filter and frame
/// (row m * T + t) and one representation per frame and class (row t * C + c).
template <typename Real>
struct RelativePooling {
  Matrix<Real> attention;
  Matrix<Real> pooled;
  Matrix<Real> rep;
};

/// Super-event representation for every class as the attention-weighted
/// mixture of the M shared pooled vectors.
template <typename Real>
AttendedPooling<Real> pool_attended(
    std::span<const MaterializedFilter<Real>> filters,
    const AttentionWeights<Real>& weights, const Matrix<Real>& features);

/// Per-frame super-events: every filter (materialized at the kernel length)
/// is slid over the sequence with its row j aligned to frame t + j - L/2.
/// Frames outside the sequence contribute zero.
template <typename Real>
RelativePooling<Real> pool_relative(
    std::span<const MaterializedFilter<Real>> filters,
    const AttentionWeights<Real>& weights, const Matrix<Real>& features,
    const RelativeConfig& config);

/// Parameter-free global poolings used as ablation baselines.
template <typename Real>
std::vector<Real> pool_baseline(BaselinePooling kind,
                                const Matrix<Real>& features);

template <typename Real>
struct SingleGradients {
  Matrix<Real> filter;    // T x N
  Matrix<Real> features;  // T x D, empty unless requested
};

template <typename Real>
struct AttendedGradients {
  std::vector<Matrix<Real>> filters;  // one T x N (or L x N) per filter
  Matrix<Real> logits;                // C x M
  Matrix<Real> features;              // T x D, empty unless requested
};

template <typename Real>
SingleGradients<Real> pool_single_backward(
    const MaterializedFilter<Real>& filter, const Matrix<Real>& features,
    std::span<const Real> upstream, bool with_features = true);

template <typename Real>
AttendedGradients<Real> pool_attended_backward(
    std::span<const MaterializedFilter<Real>> filters,
    const AttendedPooling<Real>& forward, const Matrix<Real>& features,
    const Matrix<Real>& upstream, bool with_features = true);

template <typename Real>
AttendedGradients<Real> pool_relative_backward(
    std::span<const MaterializedFilter<Real>> filters,
    const RelativePooling<Real>& forward, const Matrix<Real>& features,
    const RelativeConfig& config, const Matrix<Real>& upstream,
    bool with_features = true);

/// Backward of the row softmax: given dL/dA returns dL/dW.
template <typename Real>
Matrix<Real> softmax_backward(const Matrix<Real>& attention,
                              const Matrix<Real>& upstream);

}  // namespace tsfm
