#include "tsfm/superevent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tsfm/error.hpp"

namespace tsfm {
namespace {

template <typename Real>
void check_filters(std::span<const MaterializedFilter<Real>> filters,
                   std::size_t length, std::size_t weight_filters,
                   const char* op) {
  if (filters.empty()) throw ShapeError(std::string(op) + ": no filters");
  if (filters.size() != weight_filters) {
    throw ShapeError(std::string(op) + ": " + std::to_string(filters.size()) +
                     " filters but attention has " +
                     std::to_string(weight_filters) + " columns");
  }
  const std::size_t count = filters.front().size();
  for (const auto& f : filters) {
    if (f.length() != length) {
      throw ShapeError(std::string(op) + ": filter length " +
                       std::to_string(f.length()) + ", expected " +
                       std::to_string(length));
    }
    if (f.size() != count) {
      throw ShapeError(std::string(op) + ": filters differ in distributions");
    }
  }
}

// Mean of rows [begin, end) of v into out.
template <typename Real>
void segment_mean(const Matrix<Real>& v, std::size_t begin, std::size_t end,
                  std::span<Real> out) {
  std::fill(out.begin(), out.end(), Real{0});
  for (std::size_t t = begin; t < end; ++t) {
    const auto row = v.row(t);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += row[d];
  }
  const Real count = static_cast<Real>(end - begin);
  for (auto& x : out) x /= count;
}

}  // namespace

void RelativeConfig::validate() const {
  if (length == 0 || length % 2 == 0) {
    throw std::invalid_argument("relative kernel length must be odd and >= 1, got " +
                                std::to_string(length));
  }
}

std::string_view to_string(BaselinePooling kind) noexcept {
  switch (kind) {
    case BaselinePooling::kMax: return "max";
    case BaselinePooling::kMean: return "mean";
    case BaselinePooling::kPyramid3: return "pyramid3";
  }
  return "unknown";
}

std::size_t pooled_segments(BaselinePooling kind) noexcept {
  return kind == BaselinePooling::kPyramid3 ? 7 : 1;
}

template <typename Real>
Matrix<Real> soft_attention(const AttentionWeights<Real>& weights) {
  const auto& w = weights.logits;
  Matrix<Real> out(w.rows(), w.cols());
  for (std::size_t c = 0; c < w.rows(); ++c) {
    const auto row = w.row(c);
    for (Real x : row) {
      if (!std::isfinite(x)) {
        throw NumericError("soft_attention: non-finite logit in row " +
                           std::to_string(c));
      }
    }
    const Real top = *std::max_element(row.begin(), row.end());
    Real total{0};
    for (std::size_t m = 0; m < row.size(); ++m) {
      out(c, m) = std::exp(row[m] - top);
      total += out(c, m);
    }
    for (std::size_t m = 0; m < row.size(); ++m) out(c, m) /= total;
  }
  return out;
}

template <typename Real>
Matrix<Real> softmax_backward(const Matrix<Real>& attention,
                              const Matrix<Real>& upstream) {
  if (!same_shape(attention, upstream)) {
    throw ShapeError("softmax_backward: shape mismatch");
  }
  Matrix<Real> out(attention.rows(), attention.cols());
  for (std::size_t c = 0; c < attention.rows(); ++c) {
    Real dot{0};
    for (std::size_t m = 0; m < attention.cols(); ++m) {
      dot += attention(c, m) * upstream(c, m);
    }
    for (std::size_t m = 0; m < attention.cols(); ++m) {
      out(c, m) = attention(c, m) * (upstream(c, m) - dot);
    }
  }
  return out;
}

template <typename Real>
std::vector<Real> pool_single(const MaterializedFilter<Real>& filter,
                              const Matrix<Real>& features) {
  if (filter.length() != features.rows()) {
    throw ShapeError("pool_single: filter length " +
                     std::to_string(filter.length()) + " vs " +
                     std::to_string(features.rows()) + " frames");
  }
  const std::size_t dim = features.cols();
  std::vector<Real> out(filter.size() * dim, Real{0});
  for (std::size_t t = 0; t < features.rows(); ++t) {
    const auto v = features.row(t);
    for (std::size_t n = 0; n < filter.size(); ++n) {
      const Real w = filter.values(t, n);
      Real* block = out.data() + n * dim;
      for (std::size_t d = 0; d < dim; ++d) block[d] += w * v[d];
    }
  }
  return out;
}

template <typename Real>
AttendedPooling<Real> pool_attended(
    std::span<const MaterializedFilter<Real>> filters,
    const AttentionWeights<Real>& weights, const Matrix<Real>& features) {
  check_filters(filters, features.rows(), weights.filters(), "pool_attended");
  const std::size_t width = filters.front().size() * features.cols();

  AttendedPooling<Real> out;
  out.attention = soft_attention(weights);
  out.pooled = Matrix<Real>(filters.size(), width);
  for (std::size_t m = 0; m < filters.size(); ++m) {
    const auto pooled = pool_single(filters[m], features);
    std::copy(pooled.begin(), pooled.end(), out.pooled.row(m).begin());
  }
  out.rep = Matrix<Real>(weights.classes(), width);
  for (std::size_t c = 0; c < weights.classes(); ++c) {
    auto rep = out.rep.row(c);
    for (std::size_t m = 0; m < filters.size(); ++m) {
      const Real a = out.attention(c, m);
      const auto pooled = out.pooled.row(m);
      for (std::size_t k = 0; k < width; ++k) rep[k] += a * pooled[k];
    }
  }
  return out;
}

template <typename Real>
RelativePooling<Real> pool_relative(
    std::span<const MaterializedFilter<Real>> filters,
    const AttentionWeights<Real>& weights, const Matrix<Real>& features,
    const RelativeConfig& config) {
  config.validate();
  check_filters(filters, config.length, weights.filters(), "pool_relative");

  const std::size_t frames = features.rows();
  const std::size_t dim = features.cols();
  const std::size_t count = filters.front().size();
  const std::size_t width = count * dim;
  const std::size_t classes = weights.classes();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(config.half());

  RelativePooling<Real> out;
  out.attention = soft_attention(weights);
  out.pooled = Matrix<Real>(filters.size() * frames, width);
  for (std::size_t m = 0; m < filters.size(); ++m) {
    const auto& kernel = filters[m].values;
    for (std::size_t t = 0; t < frames; ++t) {
      Real* dst = out.pooled.row(m * frames + t).data();
      for (std::size_t j = 0; j < config.length; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
        const Real* v = features.row(static_cast<std::size_t>(s)).data();
        for (std::size_t n = 0; n < count; ++n) {
          const Real w = kernel(j, n);
          Real* block = dst + n * dim;
          for (std::size_t d = 0; d < dim; ++d) block[d] += w * v[d];
        }
      }
    }
  }

  out.rep = Matrix<Real>(frames * classes, width);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < classes; ++c) {
      Real* rep = out.rep.row(t * classes + c).data();
      for (std::size_t m = 0; m < filters.size(); ++m) {
        const Real a = out.attention(c, m);
        const Real* pooled = out.pooled.row(m * frames + t).data();
        for (std::size_t k = 0; k < width; ++k) rep[k] += a * pooled[k];
      }
    }
  }
  return out;
}

template <typename Real>
std::vector<Real> pool_baseline(BaselinePooling kind,
                                const Matrix<Real>& features) {
  const std::size_t frames = features.rows();
  const std::size_t dim = features.cols();
  if (frames == 0) throw ShapeError("pool_baseline: empty sequence");

  if (kind == BaselinePooling::kMax) {
    std::vector<Real> out(features.row(0).begin(), features.row(0).end());
    for (std::size_t t = 1; t < frames; ++t) {
      const auto v = features.row(t);
      for (std::size_t d = 0; d < dim; ++d) out[d] = std::max(out[d], v[d]);
    }
    return out;
  }
  if (kind == BaselinePooling::kMean) {
    std::vector<Real> out(dim);
    segment_mean(features, 0, frames, std::span<Real>(out));
    return out;
  }

  // Level-3 pyramid: whole, halves, quarters.
  std::vector<Real> out(7 * dim, Real{0});
  std::size_t slot = 0;
  for (std::size_t parts : {1u, 2u, 4u}) {
    std::vector<std::pair<std::size_t, std::size_t>> bounds(parts);
    for (std::size_t i = 0; i < parts; ++i) {
      bounds[i] = {i * frames / parts, (i + 1) * frames / parts};
    }
    for (std::size_t i = 0; i < parts; ++i) {
      // Empty segments (only when frames < parts) take the closest nonempty
      // one, preferring the earlier segment on ties.
      std::size_t source = i;
      if (bounds[i].first == bounds[i].second) {
        for (std::size_t offset = 1; offset < parts; ++offset) {
          if (i >= offset && bounds[i - offset].first < bounds[i - offset].second) {
            source = i - offset;
            break;
          }
          if (i + offset < parts &&
              bounds[i + offset].first < bounds[i + offset].second) {
            source = i + offset;
            break;
          }
        }
      }
      segment_mean(features, bounds[source].first, bounds[source].second,
                   std::span<Real>(out.data() + (slot + i) * dim, dim));
    }
    slot += parts;
  }
  return out;
}

template <typename Real>
SingleGradients<Real> pool_single_backward(
    const MaterializedFilter<Real>& filter, const Matrix<Real>& features,
    std::span<const Real> upstream, bool with_features) {
  const std::size_t frames = features.rows();
  const std::size_t dim = features.cols();
  const std::size_t count = filter.size();
  if (filter.length() != frames || upstream.size() != count * dim) {
    throw ShapeError("pool_single_backward: shape mismatch");
  }
  SingleGradients<Real> out;
  out.filter = Matrix<Real>(frames, count);
  if (with_features) out.features = Matrix<Real>(frames, dim);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto v = features.row(t);
    for (std::size_t n = 0; n < count; ++n) {
      const Real* up = upstream.data() + n * dim;
      Real acc{0};
      for (std::size_t d = 0; d < dim; ++d) acc += up[d] * v[d];
      out.filter(t, n) = acc;
      if (with_features) {
        const Real w = filter.values(t, n);
        auto dv = out.features.row(t);
        for (std::size_t d = 0; d < dim; ++d) dv[d] += w * up[d];
      }
    }
  }
  return out;
}

template <typename Real>
AttendedGradients<Real> pool_attended_backward(
    std::span<const MaterializedFilter<Real>> filters,
    const AttendedPooling<Real>& forward, const Matrix<Real>& features,
    const Matrix<Real>& upstream, bool with_features) {
  if (!same_shape(upstream, forward.rep)) {
    throw ShapeError("pool_attended_backward: upstream must match representation");
  }
  const std::size_t classes = forward.attention.rows();
  const std::size_t shared = forward.attention.cols();
  const std::size_t width = forward.rep.cols();
  check_filters(filters, features.rows(), shared, "pool_attended_backward");

  Matrix<Real> d_attention(classes, shared);
  Matrix<Real> d_pooled(shared, width);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto up = upstream.row(c);
    for (std::size_t m = 0; m < shared; ++m) {
      const auto pooled = forward.pooled.row(m);
      auto dp = d_pooled.row(m);
      const Real a = forward.attention(c, m);
      Real dot{0};
      for (std::size_t k = 0; k < width; ++k) {
        dot += up[k] * pooled[k];
        dp[k] += a * up[k];
      }
      d_attention(c, m) = dot;
    }
  }

  AttendedGradients<Real> out;
  out.logits = softmax_backward(forward.attention, d_attention);
  if (with_features) out.features = Matrix<Real>(features.rows(), features.cols());
  out.filters.reserve(shared);
  for (std::size_t m = 0; m < shared; ++m) {
    auto grads = pool_single_backward(filters[m], features,
                                      std::span<const Real>(d_pooled.row(m)),
                                      with_features);
    out.filters.push_back(std::move(grads.filter));
    if (with_features) {
      auto dst = out.features.flat();
      const auto src = grads.features.flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

template <typename Real>
AttendedGradients<Real> pool_relative_backward(
    std::span<const MaterializedFilter<Real>> filters,
    const RelativePooling<Real>& forward, const Matrix<Real>& features,
    const RelativeConfig& config, const Matrix<Real>& upstream,
    bool with_features) {
  config.validate();
  if (!same_shape(upstream, forward.rep)) {
    throw ShapeError("pool_relative_backward: upstream must match representation");
  }
  const std::size_t frames = features.rows();
  const std::size_t dim = features.cols();
  const std::size_t classes = forward.attention.rows();
  const std::size_t shared = forward.attention.cols();
  const std::size_t width = forward.rep.cols();
  check_filters(filters, config.length, shared, "pool_relative_backward");
  const std::size_t count = filters.front().size();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(config.half());

  Matrix<Real> d_attention(classes, shared);
  Matrix<Real> d_pooled(shared * frames, width);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < classes; ++c) {
      const Real* up = upstream.row(t * classes + c).data();
      for (std::size_t m = 0; m < shared; ++m) {
        const Real* pooled = forward.pooled.row(m * frames + t).data();
        Real* dp = d_pooled.row(m * frames + t).data();
        const Real a = forward.attention(c, m);
        Real dot{0};
        for (std::size_t k = 0; k < width; ++k) {
          dot += up[k] * pooled[k];
          dp[k] += a * up[k];
        }
        d_attention(c, m) += dot;
      }
    }
  }

  AttendedGradients<Real> out;
  out.logits = softmax_backward(forward.attention, d_attention);
  if (with_features) out.features = Matrix<Real>(frames, dim);
  out.filters.assign(shared, Matrix<Real>(config.length, count));
  for (std::size_t m = 0; m < shared; ++m) {
    const auto& kernel = filters[m].values;
    auto& d_kernel = out.filters[m];
    for (std::size_t t = 0; t < frames; ++t) {
      const Real* dp = d_pooled.row(m * frames + t).data();
      for (std::size_t j = 0; j < config.length; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
        const Real* v = features.row(static_cast<std::size_t>(s)).data();
        for (std::size_t n = 0; n < count; ++n) {
          const Real* up = dp + n * dim;
          Real acc{0};
          for (std::size_t d = 0; d < dim; ++d) acc += up[d] * v[d];
          d_kernel(j, n) += acc;
          if (with_features) {
            const Real w = kernel(j, n);
            Real* dv = out.features.row(static_cast<std::size_t>(s)).data();
            for (std::size_t d = 0; d < dim; ++d) dv[d] += w * up[d];
          }
        }
      }
    }
  }
  return out;
}

#define TSFM_INSTANTIATE(Real)                                                 \
  template Matrix<Real> soft_attention(const AttentionWeights<Real>&);         \
  template Matrix<Real> softmax_backward(const Matrix<Real>&,                  \
                                         const Matrix<Real>&);                 \
  template std::vector<Real> pool_single(const MaterializedFilter<Real>&,      \
                                         const Matrix<Real>&);                 \
  template AttendedPooling<Real> pool_attended(                                \
      std::span<const MaterializedFilter<Real>>, const AttentionWeights<Real>&, \
      const Matrix<Real>&);                                                    \
  template RelativePooling<Real> pool_relative(                                \
      std::span<const MaterializedFilter<Real>>, const AttentionWeights<Real>&, \
      const Matrix<Real>&, const RelativeConfig&);                             \
  template std::vector<Real> pool_baseline(BaselinePooling,                    \
                                           const Matrix<Real>&);               \
  template SingleGradients<Real> pool_single_backward(                         \
      const MaterializedFilter<Real>&, const Matrix<Real>&,                    \
      std::span<const Real>, bool);                                            \
  template AttendedGradients<Real> pool_attended_backward(                     \
      std::span<const MaterializedFilter<Real>>, const AttendedPooling<Real>&,  \
      const Matrix<Real>&, const Matrix<Real>&, bool);                         \
  template AttendedGradients<Real> pool_relative_backward(                     \
      std::span<const MaterializedFilter<Real>>, const RelativePooling<Real>&,  \
      const Matrix<Real>&, const RelativeConfig&, const Matrix<Real>&, bool);

TSFM_INSTANTIATE(float)
TSFM_INSTANTIATE(double)
TSFM_INSTANTIATE(long double)
#undef TSFM_INSTANTIATE

}  // namespace tsfm
