#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tsfm/filter.hpp"
#include "tsfm/matrix.hpp"

namespace tsfm {

/// z(t, c) = 1 when class c is active at frame t.
using LabelMask = Matrix<std::uint8_t>;

/// Logits are clamped to this range before the loss and sigmoid.
inline constexpr double kLogitClamp = 30.0;

/// How a context matrix is indexed by (frame, class).
enum class ContextLayout {
  kNone,      // no context (baseline head)
  kShared,    // one row used by every frame and class
  kPerClass,  // row c
  kPerFrame,  // row t * C + c
};

template <typename Real>
struct Context {
  ContextLayout layout = ContextLayout::kNone;
  Matrix<Real> values;

  std::size_t width() const noexcept { return values.cols(); }
};

/// Classifier weights. `weight` scores [v_t, context] and `baseline_weight`
/// scores v_t alone; a model only populates the head it uses.
template <typename Real>
struct DetectorParams {
  Matrix<Real> weight;  // C x (D + K)
  std::vector<Real> bias;
  Matrix<Real> baseline_weight;  // C x D
  std::vector<Real> baseline_bias;

  template <typename U>
  DetectorParams<U> cast() const {
    DetectorParams<U> out;
    out.weight = weight.template cast<U>();
    out.bias.assign(bias.begin(), bias.end());
    out.baseline_weight = baseline_weight.template cast<U>();
    out.baseline_bias.assign(baseline_bias.begin(), baseline_bias.end());
    return out;
  }

  bool operator==(const DetectorParams&) const = default;
};

template <typename Real>
struct DetectorGradients {
  DetectorParams<Real> params;
  Matrix<Real> context;   // same shape as the forward context
  Matrix<Real> features;  // T x D, empty unless requested
};

/// Context head with Uniform(-a, a), a = sqrt(1 / (D + K)), and zero bias.
template <typename Real>
DetectorParams<Real> init_detector(std::size_t classes, std::size_t features,
                                   std::size_t context_width, Rng& rng);

/// Per-frame head only, a = sqrt(1 / D).
template <typename Real>
DetectorParams<Real> init_baseline_detector(std::size_t classes,
                                            std::size_t features, Rng& rng);

/// weight[c] . [v_t, S] + bias[c] for every frame and class (T x C).
template <typename Real>
Matrix<Real> frame_logits(const DetectorParams<Real>& params,
                          const Matrix<Real>& features,
                          const Context<Real>& context);

template <typename Real>
Matrix<Real> frame_logits_baseline(const DetectorParams<Real>& params,
                                   const Matrix<Real>& features);

template <typename Real>
Real sigmoid(Real x) noexcept;

template <typename Real>
Matrix<Real> sigmoid(const Matrix<Real>& logits);

template <typename Real>
Matrix<Real> classify_frames(const DetectorParams<Real>& params,
                             const Matrix<Real>& features,
                             const Context<Real>& context);

template <typename Real>
Matrix<Real> classify_frames_baseline(const DetectorParams<Real>& params,
                                      const Matrix<Real>& features);

/// Mean binary cross-entropy over all T * C terms, evaluated from clamped
/// logits as softplus(l) - z * l.
template <typename Real>
Real bce_loss(const Matrix<Real>& logits, const LabelMask& labels);

/// Same loss for callers holding probabilities; converts back to logits.
template <typename Real>
Real bce_loss_from_probabilities(const Matrix<Real>& probabilities,
                                 const LabelMask& labels);

/// dLoss/dlogit = (sigmoid(l) - z) / (T * C).
template <typename Real>
Matrix<Real> bce_backward(const Matrix<Real>& logits, const LabelMask& labels);

template <typename Real>
DetectorGradients<Real> detector_backward(const DetectorParams<Real>& params,
                                          const Matrix<Real>& features,
                                          const Context<Real>& context,
                                          const Matrix<Real>& logits,
                                          const LabelMask& labels,
                                          bool with_features = true);

template <typename Real>
DetectorGradients<Real> detector_backward_baseline(
    const DetectorParams<Real>& params, const Matrix<Real>& features,
    const Matrix<Real>& logits, const LabelMask& labels,
    bool with_features = true);

}  // namespace tsfm
