#include "tsfm/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "tsfm/error.hpp"

namespace tsfm {
namespace {

BaselinePooling pooling_of(Variant variant) {
  switch (variant) {
    case Variant::kMax: return BaselinePooling::kMax;
    case Variant::kMean: return BaselinePooling::kMean;
    default: return BaselinePooling::kPyramid3;
  }
}

template <typename Real>
std::vector<MaterializedFilter<Real>> materialize_all(
    const ModelShape& shape, const ModelParams<Real>& params,
    std::size_t frames) {
  std::vector<MaterializedFilter<Real>> out;
  out.reserve(params.filters.size());
  const std::size_t length = shape.filter_length(frames);
  for (const auto& f : params.filters) out.push_back(materialize_filter(f, length));
  return out;
}

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) noexcept {
  Real total{0};
  for (std::size_t i = 0; i < n; ++i) total += a[i] * b[i];
  return total;
}

// The relative head never builds the (T * C) x (N * D) representation. The
// context score of class c at frame t is
//   sum_j sum_n K_c(j, n) P(t + j - L/2, c, n)
// where K_c = sum_m A(c, m) F_m is the class's mixed kernel and P(s, c, n)
// projects v_s onto the context weights of class c and distribution n.
template <typename Real>
struct RelativeHead {
  Matrix<Real> attention;  // C x M
  Matrix<Real> kernels;    // row c * L + j, N columns
  Matrix<Real> projected;  // T x (C * N)
};

template <typename Real>
RelativeHead<Real> relative_head(const ModelShape& shape, const ModelParams<Real>& params,
                                 const std::vector<MaterializedFilter<Real>>& filters,
                                 const Matrix<Real>& features, Matrix<Real>& logits) {
  const std::size_t frames = features.rows(), dim = shape.features;
  const std::size_t classes = shape.classes, count = shape.distributions;
  const std::size_t length = shape.kernel_length, half = length / 2;
  const auto& det = params.detector;
  if (det.weight.rows() != classes || det.weight.cols() != dim + count * dim ||
      det.bias.size() != classes || params.attention.rows() != classes ||
      params.attention.cols() != filters.size()) {
    throw ShapeError("model parameters do not match the relative shape");
  }

  RelativeHead<Real> head;
  head.attention = soft_attention(AttentionWeights<Real>{params.attention});
  head.kernels = Matrix<Real>(classes * length, count);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t m = 0; m < filters.size(); ++m) {
      const Real a = head.attention(c, m);
      for (std::size_t j = 0; j < length; ++j) {
        for (std::size_t n = 0; n < count; ++n) {
          head.kernels(c * length + j, n) += a * filters[m].values(j, n);
        }
      }
    }
  }

  head.projected = Matrix<Real>(frames, classes * count);
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* v = features.row(t).data();
    for (std::size_t c = 0; c < classes; ++c) {
      const Real* w = det.weight.row(c).data() + dim;
      for (std::size_t n = 0; n < count; ++n) {
        head.projected(t, c * count + n) = dot(w + n * dim, v, dim);
      }
    }
  }

  logits = Matrix<Real>(frames, classes);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t j_begin = t < half ? half - t : 0;
    const std::size_t j_end = std::min(length, frames + half - t);
    for (std::size_t c = 0; c < classes; ++c) {
      Real ctx{0};
      for (std::size_t j = j_begin; j < j_end; ++j) {
        const Real* k = head.kernels.row(c * length + j).data();
        const Real* p = head.projected.row(t + j - half).data() + c * count;
        ctx += dot(k, p, count);
      }
      logits(t, c) = (dot(det.weight.row(c).data(), features.row(t).data(), dim) + ctx) +
                     det.bias[c];
    }
  }
  return head;
}

template <typename Real>
void relative_head_backward(const ModelShape& shape, const ModelParams<Real>& params,
                            const std::vector<MaterializedFilter<Real>>& filters,
                            const RelativeHead<Real>& head, const Matrix<Real>& features,
                            const Matrix<Real>& d_logits, ModelParams<Real>& grad) {
  const std::size_t frames = features.rows(), dim = shape.features;
  const std::size_t classes = shape.classes, count = shape.distributions;
  const std::size_t length = shape.kernel_length, half = length / 2;
  auto& dw = grad.detector.weight;

  Matrix<Real> d_kernels(classes * length, count);
  Matrix<Real> d_projected(frames, classes * count);
  for (std::size_t t = 0; t < frames; ++t) {
    const Real* v = features.row(t).data();
    const std::size_t j_begin = t < half ? half - t : 0;
    const std::size_t j_end = std::min(length, frames + half - t);
    for (std::size_t c = 0; c < classes; ++c) {
      const Real g = d_logits(t, c);
      grad.detector.bias[c] += g;
      Real* w = dw.row(c).data();
      for (std::size_t d = 0; d < dim; ++d) w[d] += g * v[d];
      for (std::size_t j = j_begin; j < j_end; ++j) {
        const std::size_t s = t + j - half;
        for (std::size_t n = 0; n < count; ++n) {
          d_kernels(c * length + j, n) += g * head.projected(s, c * count + n);
          d_projected(s, c * count + n) += g * head.kernels(c * length + j, n);
        }
      }
    }
  }

  for (std::size_t s = 0; s < frames; ++s) {
    const Real* v = features.row(s).data();
    for (std::size_t c = 0; c < classes; ++c) {
      Real* w = dw.row(c).data() + dim;
      for (std::size_t n = 0; n < count; ++n) {
        const Real g = d_projected(s, c * count + n);
        for (std::size_t d = 0; d < dim; ++d) w[n * dim + d] += g * v[d];
      }
    }
  }

  Matrix<Real> d_attention(classes, filters.size());
  for (std::size_t m = 0; m < filters.size(); ++m) {
    Matrix<Real> d_filter(length, count);
    for (std::size_t c = 0; c < classes; ++c) {
      const Real a = head.attention(c, m);
      Real total{0};
      for (std::size_t j = 0; j < length; ++j) {
        for (std::size_t n = 0; n < count; ++n) {
          const Real g = d_kernels(c * length + j, n);
          total += g * filters[m].values(j, n);
          d_filter(j, n) += a * g;
        }
      }
      d_attention(c, m) = total;
    }
    grad.filters[m] = filter_backward(params.filters[m], filters[m], d_filter);
  }
  grad.attention = softmax_backward(head.attention, d_attention);
}

// Everything the backward pass needs from one forward evaluation.
template <typename Real>
struct Forward {
  std::vector<MaterializedFilter<Real>> filters;
  AttendedPooling<Real> attended;
  RelativeHead<Real> relative;
  Context<Real> context;
  Matrix<Real> logits;
};

template <typename Real>
Forward<Real> run_forward(const ModelShape& shape, const ModelParams<Real>& params,
                          const Matrix<Real>& features) {
  if (features.cols() != shape.features) {
    throw ShapeError("model expects " + std::to_string(shape.features) +
                     " features per frame, got " + std::to_string(features.cols()));
  }
  if (features.rows() == 0) throw ShapeError("model: empty sequence");

  Forward<Real> fw;
  fw.context.layout = shape.context_layout();
  const AttentionWeights<Real> weights{params.attention};

  switch (shape.variant) {
    case Variant::kBaseline:
      fw.logits = frame_logits_baseline(params.detector, features);
      return fw;
    case Variant::kMax:
    case Variant::kMean:
    case Variant::kPyramid3: {
      const auto pooled = pool_baseline(pooling_of(shape.variant), features);
      fw.context.values = Matrix<Real>(1, pooled.size());
      std::copy(pooled.begin(), pooled.end(), fw.context.values.data());
      break;
    }
    case Variant::kSingle: {
      fw.filters = materialize_all(shape, params, features.rows());
      fw.context.values = Matrix<Real>(shape.classes, shape.context_width());
      for (std::size_t c = 0; c < shape.classes; ++c) {
        const auto pooled = pool_single(fw.filters[c], features);
        std::copy(pooled.begin(), pooled.end(), fw.context.values.row(c).begin());
      }
      break;
    }
    case Variant::kAttended: {
      fw.filters = materialize_all(shape, params, features.rows());
      fw.attended = pool_attended(
          std::span<const MaterializedFilter<Real>>(fw.filters), weights, features);
      fw.context.values = fw.attended.rep;
      break;
    }
    case Variant::kRelative: {
      fw.filters = materialize_all(shape, params, features.rows());
      fw.relative = relative_head(shape, params, fw.filters, features, fw.logits);
      return fw;
    }
  }
  fw.logits = frame_logits(params.detector, features, fw.context);
  return fw;
}

}  // namespace

std::string_view to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::kBaseline: return "baseline";
    case Variant::kMax: return "max";
    case Variant::kMean: return "mean";
    case Variant::kPyramid3: return "pyramid3";
    case Variant::kSingle: return "single";
    case Variant::kAttended: return "attended";
    case Variant::kRelative: return "relative";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected baseline, max, mean, pyramid3, "
                              "single, attended or relative)");
}

void ModelShape::validate() const {
  if (classes == 0) throw std::invalid_argument("model: class count must be >= 1");
  if (features == 0) throw std::invalid_argument("model: feature dimension must be >= 1");
  if (filter_count() > 0 && distributions == 0) {
    throw std::invalid_argument("model: distributions per filter must be >= 1");
  }
  if (uses_attention() && filters == 0) {
    throw std::invalid_argument("model: filter count must be >= 1");
  }
  if (variant == Variant::kRelative) RelativeConfig{kernel_length}.validate();
}

std::size_t ModelShape::filter_count() const noexcept {
  switch (variant) {
    case Variant::kSingle: return classes;
    case Variant::kAttended:
    case Variant::kRelative: return filters;
    default: return 0;
  }
}

std::size_t ModelShape::context_width() const noexcept {
  switch (variant) {
    case Variant::kBaseline: return 0;
    case Variant::kMax:
    case Variant::kMean: return features;
    case Variant::kPyramid3: return 7 * features;
    default: return distributions * features;
  }
}

bool ModelShape::uses_attention() const noexcept {
  return variant == Variant::kAttended || variant == Variant::kRelative;
}

ContextLayout ModelShape::context_layout() const noexcept {
  switch (variant) {
    case Variant::kBaseline: return ContextLayout::kNone;
    case Variant::kRelative: return ContextLayout::kPerFrame;
    case Variant::kSingle:
    case Variant::kAttended: return ContextLayout::kPerClass;
    default: return ContextLayout::kShared;
  }
}

std::size_t ModelShape::filter_length(std::size_t frames) const noexcept {
  return variant == Variant::kRelative ? kernel_length : frames;
}

template <typename Real>
ModelParams<Real> init_params(const ModelShape& shape, Rng& rng) {
  shape.validate();
  ModelParams<Real> params;
  for (std::size_t i = 0; i < shape.filter_count(); ++i) {
    params.filters.push_back(init_filter<Real>(shape.distributions, rng));
  }
  if (shape.uses_attention()) {
    params.attention = Matrix<Real>(shape.classes, shape.filters);
  }
  if (shape.variant == Variant::kBaseline) {
    params.detector = init_baseline_detector<Real>(shape.classes, shape.features, rng);
  } else {
    params.detector = init_detector<Real>(shape.classes, shape.features,
                                          shape.context_width(), rng);
  }
  return params;
}

template <typename Real>
ModelParams<Real> zero_params(const ModelShape& shape) {
  shape.validate();
  ModelParams<Real> params;
  params.filters.assign(shape.filter_count(), FilterParams<Real>(shape.distributions));
  if (shape.uses_attention()) {
    params.attention = Matrix<Real>(shape.classes, shape.filters);
  }
  if (shape.variant == Variant::kBaseline) {
    params.detector.baseline_weight = Matrix<Real>(shape.classes, shape.features);
    params.detector.baseline_bias.assign(shape.classes, Real{0});
  } else {
    params.detector.weight =
        Matrix<Real>(shape.classes, shape.features + shape.context_width());
    params.detector.bias.assign(shape.classes, Real{0});
  }
  return params;
}

template <typename Real>
void check_params(const ModelShape& shape, const ModelParams<Real>& params) {
  const ModelParams<Real> expected = zero_params<Real>(shape);
  std::vector<std::size_t> want;
  std::vector<std::size_t> got;
  expected.for_each([&](std::string_view, std::span<const Real> v) { want.push_back(v.size()); });
  params.for_each([&](std::string_view, std::span<const Real> v) { got.push_back(v.size()); });
  if (want != got || params.attention.rows() != expected.attention.rows() ||
      params.detector.weight.rows() != expected.detector.weight.rows()) {
    throw ShapeError("model parameters do not match the " +
                     std::string(to_string(shape.variant)) + " shape");
  }
}

template <typename Real>
Context<Real> super_event_context(const ModelShape& shape,
                                  const ModelParams<Real>& params,
                                  const Matrix<Real>& features) {
  if (shape.variant == Variant::kBaseline) return {};
  if (shape.variant == Variant::kRelative) {
    const auto filters = materialize_all(shape, params, features.rows());
    return {ContextLayout::kPerFrame,
            pool_relative(std::span<const MaterializedFilter<Real>>(filters),
                          AttentionWeights<Real>{params.attention}, features,
                          RelativeConfig{shape.kernel_length})
                .rep};
  }
  return run_forward(shape, params, features).context;
}

template <typename Real>
Matrix<Real> predict_logits(const ModelShape& shape,
                            const ModelParams<Real>& params,
                            const Matrix<Real>& features) {
  return run_forward(shape, params, features).logits;
}

template <typename Real>
Real video_loss(const ModelShape& shape, const ModelParams<Real>& params,
                const Matrix<Real>& features, const LabelMask& labels) {
  return bce_loss(predict_logits(shape, params, features), labels);
}

template <typename Real>
LossAndGradient<Real> video_loss_and_gradient(const ModelShape& shape,
                                              const ModelParams<Real>& params,
                                              const Matrix<Real>& features,
                                              const LabelMask& labels) {
  const Forward<Real> fw = run_forward(shape, params, features);
  LossAndGradient<Real> out;
  out.loss = bce_loss(fw.logits, labels);
  out.gradient = params.zeros_like();
  auto& grad = out.gradient;

  if (shape.variant == Variant::kBaseline) {
    auto dd = detector_backward_baseline(params.detector, features, fw.logits,
                                         labels, false);
    grad.detector = std::move(dd.params);
    return out;
  }

  if (shape.variant == Variant::kRelative) {
    relative_head_backward(shape, params, fw.filters, fw.relative, features,
                           bce_backward(fw.logits, labels), grad);
    return out;
  }

  auto dd = detector_backward(params.detector, features, fw.context, fw.logits,
                              labels, false);
  grad.detector = std::move(dd.params);
  const Matrix<Real>& d_context = dd.context;
  const std::span<const MaterializedFilter<Real>> filters(fw.filters);

  std::vector<Matrix<Real>> d_filters;
  switch (shape.variant) {
    case Variant::kSingle:
      for (std::size_t c = 0; c < shape.classes; ++c) {
        auto g = pool_single_backward(fw.filters[c], features, d_context.row(c), false);
        d_filters.push_back(std::move(g.filter));
      }
      break;
    case Variant::kAttended: {
      auto g = pool_attended_backward(filters, fw.attended, features, d_context, false);
      d_filters = std::move(g.filters);
      grad.attention = std::move(g.logits);
      break;
    }
    default:
      break;  // parameter-free poolings
  }
  for (std::size_t i = 0; i < d_filters.size(); ++i) {
    grad.filters[i] = filter_backward(params.filters[i], fw.filters[i], d_filters[i]);
  }
  return out;
}

#define TSFM_INSTANTIATE(Real)                                                 \
  template ModelParams<Real> init_params(const ModelShape&, Rng&);             \
  template ModelParams<Real> zero_params(const ModelShape&);                   \
  template void check_params(const ModelShape&, const ModelParams<Real>&);     \
  template Context<Real> super_event_context(                                  \
      const ModelShape&, const ModelParams<Real>&, const Matrix<Real>&);       \
  template Matrix<Real> predict_logits(const ModelShape&,                      \
                                       const ModelParams<Real>&,               \
                                       const Matrix<Real>&);                   \
  template Real video_loss(const ModelShape&, const ModelParams<Real>&,        \
                           const Matrix<Real>&, const LabelMask&);             \
  template LossAndGradient<Real> video_loss_and_gradient(                      \
      const ModelShape&, const ModelParams<Real>&, const Matrix<Real>&,        \
      const LabelMask&);

TSFM_INSTANTIATE(float)
TSFM_INSTANTIATE(double)
TSFM_INSTANTIATE(long double)
#undef TSFM_INSTANTIATE

}  // namespace tsfm
