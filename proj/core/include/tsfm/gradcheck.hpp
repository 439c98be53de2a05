#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsfm/training.hpp"

namespace tsfm {

using Wide = long double;

/// A small randomized problem: T in [2, 20], D <= 8, C <= 4, M <= 3, N <= 2
/// and odd L <= 9.
struct GradcheckInstance {
  ModelShape shape;
  ModelParams<Wide> params;
  Matrix<Wide> features;
  LabelMask labels;
};

GradcheckInstance random_instance(Variant variant, std::uint64_t seed);

/// Analytic gradient under test. Defaults to video_loss_and_gradient.
using GradientFn = std::function<ModelParams<Wide>(
    const ModelShape&, const ModelParams<Wide>&, const Matrix<Wide>&, const LabelMask&)>;

struct GroupError {
  std::string group;
  std::size_t parameters = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  Variant variant = Variant::kAttended;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  double step = 0.0;
  double tolerance = 0.0;
  std::vector<GroupError> groups;  // one per non-empty parameter group
  bool passed = true;

  /// Names of the groups that exceeded the tolerance.
  std::vector<std::string> failing_groups() const;
  nlohmann::json to_json() const;
};

inline constexpr double kGradcheckStep = 1e-4;
inline constexpr double kGradcheckTolerance = 1e-4;

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(Wide analytic, Wide numeric) noexcept;

/// Central differences on every parameter of `instance`.
GradcheckReport gradcheck(const GradcheckInstance& instance,
                          const GradientFn& gradient = {});

/// Builds the instance from `seed` with the variant, M and N of `config`
/// (capped to the small-instance limits). Dropout is never applied.
GradcheckReport gradcheck(const TrainConfig& config, std::uint64_t seed,
                          const GradientFn& gradient = {});

}  // namespace tsfm
