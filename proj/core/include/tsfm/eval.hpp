#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/training.hpp"

namespace tsfm {

/// Exact (non-interpolated) average precision: the mean, over positives, of
/// the precision at each positive's rank. Frames are ranked by descending
/// score with ties kept in input order. Returns nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

/// Frame-level AP per class, frames pooled over all videos.
struct EvalReport {
  std::string variant;
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> ap;  // nullopt: class has no positives
  double map = 0.0;                       // mean over evaluated classes
  std::size_t videos = 0;
  std::size_t frames = 0;

  std::vector<std::size_t> evaluated_classes() const;
  std::vector<std::size_t> excluded_classes() const;
  /// Mean AP over a subset of classes, skipping excluded ones.
  double mean_ap(std::span<const std::size_t> classes) const;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Scores and labels are per video (T x C each) and concatenated in order.
EvalReport evaluate_scores(std::span<const Matrix<double>> scores,
                           std::span<const LabelMask> labels,
                           std::vector<std::string> class_names);

/// Per-frame class probabilities for one video (no dropout).
Matrix<float> predict_probabilities(const ModelState& model,
                                    const Matrix<float>& features);

/// Throws ShapeError when model and dataset dimensions disagree.
EvalReport evaluate(const ModelState& model, const Dataset& dataset);

}  // namespace tsfm
