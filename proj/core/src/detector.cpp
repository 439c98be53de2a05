#include "tsfm/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsfm/error.hpp"

namespace tsfm {
namespace {

template <typename Real>
Real clamp_logit(Real x) noexcept {
  const Real limit = static_cast<Real>(kLogitClamp);
  return std::clamp(x, -limit, limit);
}

std::size_t context_row(ContextLayout layout, std::size_t t, std::size_t c,
                        std::size_t classes) noexcept {
  switch (layout) {
    case ContextLayout::kShared: return 0;
    case ContextLayout::kPerClass: return c;
    case ContextLayout::kPerFrame: return t * classes + c;
    case ContextLayout::kNone: break;
  }
  return 0;
}

template <typename Real>
void check_context(const DetectorParams<Real>& params,
                   const Matrix<Real>& features, const Context<Real>& context) {
  const std::size_t classes = params.bias.size();
  const std::size_t dim = features.cols();
  if (params.weight.rows() != classes) {
    throw ShapeError("detector: weight rows must equal the class count");
  }
  if (params.weight.cols() != dim + context.width()) {
    throw ShapeError("detector: weight has " +
                     std::to_string(params.weight.cols()) +
                     " columns, input is " + std::to_string(dim) + " + " +
                     std::to_string(context.width()));
  }
  std::size_t expected_rows = 0;
  switch (context.layout) {
    case ContextLayout::kNone: expected_rows = 0; break;
    case ContextLayout::kShared: expected_rows = 1; break;
    case ContextLayout::kPerClass: expected_rows = classes; break;
    case ContextLayout::kPerFrame: expected_rows = features.rows() * classes; break;
  }
  if (context.values.rows() != expected_rows) {
    throw ShapeError("detector: context has " +
                     std::to_string(context.values.rows()) + " rows, expected " +
                     std::to_string(expected_rows));
  }
}

template <typename Real>
void check_labels(const Matrix<Real>& logits, const LabelMask& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw ShapeError("bce: logits " + std::to_string(logits.rows()) + "x" +
                     std::to_string(logits.cols()) + " vs labels " +
                     std::to_string(labels.rows()) + "x" +
                     std::to_string(labels.cols()));
  }
  if (logits.empty()) throw ShapeError("bce: empty input");
}

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) noexcept {
  Real acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

template <typename Real>
DetectorParams<Real> init_detector(std::size_t classes, std::size_t features,
                                   std::size_t context_width, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(features + context_width));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  DetectorParams<Real> params;
  params.weight = Matrix<Real>(classes, features + context_width);
  for (auto& w : params.weight.flat()) w = static_cast<Real>(uniform(rng));
  params.bias.assign(classes, Real{0});
  return params;
}

template <typename Real>
DetectorParams<Real> init_baseline_detector(std::size_t classes,
                                            std::size_t features, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(features));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  DetectorParams<Real> params;
  params.baseline_weight = Matrix<Real>(classes, features);
  for (auto& w : params.baseline_weight.flat()) w = static_cast<Real>(uniform(rng));
  params.baseline_bias.assign(classes, Real{0});
  return params;
}

template <typename Real>
Matrix<Real> frame_logits(const DetectorParams<Real>& params,
                          const Matrix<Real>& features,
                          const Context<Real>& context) {
  check_context(params, features, context);
  const std::size_t frames = features.rows();
  const std::size_t classes = params.bias.size();
  const std::size_t dim = features.cols();
  const std::size_t width = context.width();
  const bool per_frame = context.layout == ContextLayout::kPerFrame;

  // Context scores that do not depend on the frame are computed once.
  std::vector<Real> fixed(classes, Real{0});
  if (!per_frame && context.layout != ContextLayout::kNone) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t r = context_row(context.layout, 0, c, classes);
      fixed[c] = dot(params.weight.row(c).data() + dim,
                     context.values.row(r).data(), width);
    }
  }

  Matrix<Real> logits(frames, classes);
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* v = features.row(t).data();
    for (std::size_t c = 0; c < classes; ++c) {
      const Real* w = params.weight.row(c).data();
      Real ctx = fixed[c];
      if (per_frame) {
        ctx = dot(w + dim, context.values.row(t * classes + c).data(), width);
      }
      logits(t, c) = (dot(w, v, dim) + ctx) + params.bias[c];
    }
  }
  return logits;
}

template <typename Real>
Matrix<Real> frame_logits_baseline(const DetectorParams<Real>& params,
                                   const Matrix<Real>& features) {
  const std::size_t classes = params.baseline_bias.size();
  const std::size_t dim = features.cols();
  if (params.baseline_weight.rows() != classes ||
      params.baseline_weight.cols() != dim) {
    throw ShapeError("detector: baseline weight must be " +
                     std::to_string(classes) + "x" + std::to_string(dim));
  }
  Matrix<Real> logits(features.rows(), classes);
  for (std::size_t t = 0; t < features.rows(); ++t) {
    const Real* v = features.row(t).data();
    for (std::size_t c = 0; c < classes; ++c) {
      logits(t, c) = dot(params.baseline_weight.row(c).data(), v, dim) +
                     params.baseline_bias[c];
    }
  }
  return logits;
}

template <typename Real>
Real sigmoid(Real x) noexcept {
  if (x >= Real{0}) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

template <typename Real>
Matrix<Real> sigmoid(const Matrix<Real>& logits) {
  Matrix<Real> out(logits.rows(), logits.cols());
  const auto src = logits.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  return out;
}

template <typename Real>
Matrix<Real> classify_frames(const DetectorParams<Real>& params,
                             const Matrix<Real>& features,
                             const Context<Real>& context) {
  return sigmoid(frame_logits(params, features, context));
}

template <typename Real>
Matrix<Real> classify_frames_baseline(const DetectorParams<Real>& params,
                                      const Matrix<Real>& features) {
  return sigmoid(frame_logits_baseline(params, features));
}

template <typename Real>
Real bce_loss(const Matrix<Real>& logits, const LabelMask& labels) {
  check_labels(logits, labels);
  const auto l = logits.flat();
  const auto z = labels.flat();
  Real total{0};
  for (std::size_t i = 0; i < l.size(); ++i) {
    const Real x = clamp_logit(l[i]);
    const Real softplus =
        std::max(x, Real{0}) + std::log1p(std::exp(-std::abs(x)));
    total += softplus - (z[i] ? x : Real{0});
  }
  return total / static_cast<Real>(l.size());
}

template <typename Real>
Real bce_loss_from_probabilities(const Matrix<Real>& probabilities,
                                 const LabelMask& labels) {
  Matrix<Real> logits(probabilities.rows(), probabilities.cols());
  const auto p = probabilities.flat();
  auto l = logits.flat();
  const Real limit = static_cast<Real>(kLogitClamp);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= Real{0} && p[i] <= Real{1})) {
      throw NumericError("bce: probability outside [0, 1]");
    }
    if (p[i] == Real{0}) {
      l[i] = -limit;
    } else if (p[i] == Real{1}) {
      l[i] = limit;
    } else {
      l[i] = std::log(p[i]) - std::log1p(-p[i]);
    }
  }
  return bce_loss(logits, labels);
}

template <typename Real>
Matrix<Real> bce_backward(const Matrix<Real>& logits, const LabelMask& labels) {
  check_labels(logits, labels);
  const Real scale = Real{1} / static_cast<Real>(logits.size());
  Matrix<Real> out(logits.rows(), logits.cols());
  const auto l = logits.flat();
  const auto z = labels.flat();
  auto d = out.flat();
  for (std::size_t i = 0; i < l.size(); ++i) {
    d[i] = (sigmoid(clamp_logit(l[i])) - (z[i] ? Real{1} : Real{0})) * scale;
  }
  return out;
}

template <typename Real>
DetectorGradients<Real> detector_backward(const DetectorParams<Real>& params,
                                          const Matrix<Real>& features,
                                          const Context<Real>& context,
                                          const Matrix<Real>& logits,
                                          const LabelMask& labels,
                                          bool with_features) {
  check_context(params, features, context);
  const std::size_t frames = features.rows();
  const std::size_t classes = params.bias.size();
  const std::size_t dim = features.cols();
  const std::size_t width = context.width();
  if (logits.rows() != frames || logits.cols() != classes) {
    throw ShapeError("detector_backward: logits shape mismatch");
  }
  const Matrix<Real> d_logits = bce_backward(logits, labels);

  DetectorGradients<Real> out;
  out.params.weight = Matrix<Real>(classes, dim + width);
  out.params.bias.assign(classes, Real{0});
  out.context = Matrix<Real>(context.values.rows(), width);
  if (with_features) out.features = Matrix<Real>(frames, dim);

  const bool per_frame = context.layout == ContextLayout::kPerFrame;
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* v = features.row(t).data();
    for (std::size_t c = 0; c < classes; ++c) {
      const Real g = d_logits(t, c);
      Real* dw = out.params.weight.row(c).data();
      for (std::size_t d = 0; d < dim; ++d) dw[d] += g * v[d];
      out.params.bias[c] += g;
      if (per_frame) {
        const std::size_t r = t * classes + c;
        const Real* s = context.values.row(r).data();
        const Real* w = params.weight.row(c).data() + dim;
        Real* ds = out.context.row(r).data();
        for (std::size_t k = 0; k < width; ++k) {
          dw[dim + k] += g * s[k];
          ds[k] = g * w[k];
        }
      }
      if (with_features) {
        const Real* w = params.weight.row(c).data();
        Real* dv = out.features.row(t).data();
        for (std::size_t d = 0; d < dim; ++d) dv[d] += g * w[d];
      }
    }
  }

  if (!per_frame && context.layout != ContextLayout::kNone) {
    // The context row is shared by all frames: its gradient and the weight
    // gradient both only need the per-class sum of dLoss/dlogit.
    for (std::size_t c = 0; c < classes; ++c) {
      const Real g = out.params.bias[c];
      const std::size_t r = context_row(context.layout, 0, c, classes);
      const Real* s = context.values.row(r).data();
      const Real* w = params.weight.row(c).data() + dim;
      Real* dw = out.params.weight.row(c).data() + dim;
      Real* ds = out.context.row(r).data();
      for (std::size_t k = 0; k < width; ++k) {
        dw[k] += g * s[k];
        ds[k] += g * w[k];
      }
    }
  }
  return out;
}

template <typename Real>
DetectorGradients<Real> detector_backward_baseline(
    const DetectorParams<Real>& params, const Matrix<Real>& features,
    const Matrix<Real>& logits, const LabelMask& labels, bool with_features) {
  const std::size_t frames = features.rows();
  const std::size_t classes = params.baseline_bias.size();
  const std::size_t dim = features.cols();
  if (logits.rows() != frames || logits.cols() != classes ||
      params.baseline_weight.cols() != dim) {
    throw ShapeError("detector_backward_baseline: shape mismatch");
  }
  const Matrix<Real> d_logits = bce_backward(logits, labels);

  DetectorGradients<Real> out;
  out.params.baseline_weight = Matrix<Real>(classes, dim);
  out.params.baseline_bias.assign(classes, Real{0});
  if (with_features) out.features = Matrix<Real>(frames, dim);
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* v = features.row(t).data();
    for (std::size_t c = 0; c < classes; ++c) {
      const Real g = d_logits(t, c);
      Real* dw = out.params.baseline_weight.row(c).data();
      for (std::size_t d = 0; d < dim; ++d) dw[d] += g * v[d];
      out.params.baseline_bias[c] += g;
      if (with_features) {
        const Real* w = params.baseline_weight.row(c).data();
        Real* dv = out.features.row(t).data();
        for (std::size_t d = 0; d < dim; ++d) dv[d] += g * w[d];
      }
    }
  }
  return out;
}

#define TSFM_INSTANTIATE(Real)                                                 \
  template DetectorParams<Real> init_detector(std::size_t, std::size_t,        \
                                              std::size_t, Rng&);              \
  template DetectorParams<Real> init_baseline_detector(std::size_t,            \
                                                       std::size_t, Rng&);     \
  template Matrix<Real> frame_logits(const DetectorParams<Real>&,               \
                                     const Matrix<Real>&,                      \
                                     const Context<Real>&);                    \
  template Matrix<Real> frame_logits_baseline(const DetectorParams<Real>&,     \
                                              const Matrix<Real>&);            \
  template Real sigmoid(Real) noexcept;                                        \
  template Matrix<Real> sigmoid(const Matrix<Real>&);                          \
  template Matrix<Real> classify_frames(const DetectorParams<Real>&,           \
                                        const Matrix<Real>&,                   \
                                        const Context<Real>&);                 \
  template Matrix<Real> classify_frames_baseline(const DetectorParams<Real>&,  \
                                                 const Matrix<Real>&);         \
  template Real bce_loss(const Matrix<Real>&, const LabelMask&);               \
  template Real bce_loss_from_probabilities(const Matrix<Real>&,               \
                                            const LabelMask&);                 \
  template Matrix<Real> bce_backward(const Matrix<Real>&, const LabelMask&);   \
  template DetectorGradients<Real> detector_backward(                          \
      const DetectorParams<Real>&, const Matrix<Real>&, const Context<Real>&,  \
      const Matrix<Real>&, const LabelMask&, bool);                            \
  template DetectorGradients<Real> detector_backward_baseline(                 \
      const DetectorParams<Real>&, const Matrix<Real>&, const Matrix<Real>&,   \
      const LabelMask&, bool);

TSFM_INSTANTIATE(float)
TSFM_INSTANTIATE(double)
TSFM_INSTANTIATE(long double)
#undef TSFM_INSTANTIATE

}  // namespace tsfm
