#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tsfm/detector.hpp"
#include "tsfm/filter.hpp"
#include "tsfm/matrix.hpp"
#include "tsfm/superevent.hpp"

namespace tsfm {

/// Which super-event representation feeds the classifier.
enum class Variant {
  kBaseline,  // per-frame classifier, no context
  kMax,       // global max pooling
  kMean,      // global mean pooling
  kPyramid3,  // level-3 temporal pyramid
  kSingle,    // one filter per class
  kAttended,  // M shared filters with per-class soft attention
  kRelative,  // shared filters applied as per-frame kernels of length L
};

inline constexpr std::array<Variant, 7> kAllVariants = {
    Variant::kBaseline, Variant::kMax,      Variant::kMean,    Variant::kPyramid3,
    Variant::kSingle,   Variant::kAttended, Variant::kRelative};

std::string_view to_string(Variant variant) noexcept;
/// Throws std::invalid_argument for unknown names.
Variant parse_variant(std::string_view name);

struct ModelShape {
  Variant variant = Variant::kAttended;
  std::size_t classes = 0;
  std::size_t features = 0;
  std::size_t filters = 5;        // M
  std::size_t distributions = 3;  // N
  std::size_t kernel_length = 15;  // L, relative variant only

  void validate() const;
  /// Number of learnable filters (C for single, M for attended/relative).
  std::size_t filter_count() const noexcept;
  std::size_t context_width() const noexcept;
  bool uses_attention() const noexcept;
  ContextLayout context_layout() const noexcept;
  /// Length at which filters are materialized for a sequence of `frames`.
  std::size_t filter_length(std::size_t frames) const noexcept;

  bool operator==(const ModelShape&) const = default;
};

/// Every learnable tensor of a model. Also used for gradients and optimizer
/// moments, which share the layout.
template <typename Real>
struct ModelParams {
  std::vector<FilterParams<Real>> filters;
  Matrix<Real> attention;  // C x M logits
  DetectorParams<Real> detector;

  /// Visits every tensor in a fixed order as (group name, values).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& f : filters) {
      fn(std::string_view("filter_centers"), std::span<Real>(f.centers));
      fn(std::string_view("filter_widths"), std::span<Real>(f.widths));
    }
    fn(std::string_view("attention"), attention.flat());
    fn(std::string_view("weight"), detector.weight.flat());
    fn(std::string_view("bias"), std::span<Real>(detector.bias));
    fn(std::string_view("baseline_weight"), detector.baseline_weight.flat());
    fn(std::string_view("baseline_bias"), std::span<Real>(detector.baseline_bias));
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](std::string_view name, std::span<Real> values) {
          fn(name, std::span<const Real>(values));
        });
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for_each([&](std::string_view, std::span<const Real> v) { total += v.size(); });
    return total;
  }

  ModelParams zeros_like() const {
    ModelParams out = *this;
    out.for_each([](std::string_view, std::span<Real> v) {
      std::fill(v.begin(), v.end(), Real{0});
    });
    return out;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& f : filters) out.filters.push_back(f.template cast<U>());
    out.attention = attention.template cast<U>();
    out.detector = detector.template cast<U>();
    return out;
  }

  bool operator==(const ModelParams&) const = default;
};

/// Random initialization; attention logits start at zero (uniform attention).
template <typename Real>
ModelParams<Real> init_params(const ModelShape& shape, Rng& rng);

/// Correctly shaped, all-zero parameters.
template <typename Real>
ModelParams<Real> zero_params(const ModelShape& shape);

/// Throws ShapeError when `params` does not match `shape`.
template <typename Real>
void check_params(const ModelShape& shape, const ModelParams<Real>& params);

/// Builds the classifier context for one sequence. Returns an empty context
/// for the baseline variant.
template <typename Real>
Context<Real> super_event_context(const ModelShape& shape,
                                  const ModelParams<Real>& params,
                                  const Matrix<Real>& features);

template <typename Real>
Matrix<Real> predict_logits(const ModelShape& shape,
                            const ModelParams<Real>& params,
                            const Matrix<Real>& features);

template <typename Real>
Real video_loss(const ModelShape& shape, const ModelParams<Real>& params,
                const Matrix<Real>& features, const LabelMask& labels);

template <typename Real>
struct LossAndGradient {
  Real loss{0};
  ModelParams<Real> gradient;
};

template <typename Real>
LossAndGradient<Real> video_loss_and_gradient(const ModelShape& shape,
                                              const ModelParams<Real>& params,
                                              const Matrix<Real>& features,
                                              const LabelMask& labels);

}  // namespace tsfm
