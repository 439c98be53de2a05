#include "tsfm/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "tsfm/error.hpp"

namespace tsfm {

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("average_precision: scores and labels differ in length");
  }
  if (scores.empty()) throw ShapeError("average_precision: no frames");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return precision_sum / static_cast<double>(hits);
}

std::vector<std::size_t> EvalReport::evaluated_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ap.size(); ++c) {
    if (ap[c]) out.push_back(c);
  }
  return out;
}

std::vector<std::size_t> EvalReport::excluded_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ap.size(); ++c) {
    if (!ap[c]) out.push_back(c);
  }
  return out;
}

double EvalReport::mean_ap(std::span<const std::size_t> classes) const {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c : classes) {
    if (c < ap.size() && ap[c]) {
      total += *ap[c];
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < ap.size(); ++c) {
    per_class.push_back({{"class", class_names[c]},
                         {"ap", ap[c] ? nlohmann::json(*ap[c]) : nlohmann::json(nullptr)},
                         {"evaluated", ap[c].has_value()}});
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (std::size_t c : excluded_classes()) excluded.push_back(class_names[c]);
  return {{"format", "tsfm-eval"},
          {"version", 1},
          {"protocol",
           {{"pooling", "frames pooled across videos per class"},
            {"ap", "exact precision at each positive rank, no interpolation"},
            {"ties", "stable by (video index, frame index)"},
            {"classes_without_positives", "excluded from mAP"}}},
          {"variant", variant},
          {"videos", videos},
          {"frames", frames},
          {"map", map},
          {"per_class", std::move(per_class)},
          {"excluded_classes", std::move(excluded)}};
}

std::string EvalReport::to_table() const {
  std::size_t width = 5;
  for (const auto& name : class_names) width = std::max(width, name.size());
  std::ostringstream out;
  out << "# frame-level AP, frames pooled across " << videos << " videos (" << frames
      << " frames), exact AP\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %8s\n", static_cast<int>(width), "class", "AP");
  out << line;
  for (std::size_t c = 0; c < ap.size(); ++c) {
    if (ap[c]) {
      std::snprintf(line, sizeof(line), "%-*s  %8.4f\n", static_cast<int>(width),
                    class_names[c].c_str(), *ap[c]);
    } else {
      std::snprintf(line, sizeof(line), "%-*s  %8s\n", static_cast<int>(width),
                    class_names[c].c_str(), "excluded");
    }
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-*s  %8.4f\n", static_cast<int>(width), "mAP", map);
  out << line;
  return out.str();
}

EvalReport evaluate_scores(std::span<const Matrix<double>> scores,
                           std::span<const LabelMask> labels,
                           std::vector<std::string> class_names) {
  if (scores.size() != labels.size()) {
    throw ShapeError("evaluate: score and label lists differ in length");
  }
  const std::size_t classes = class_names.size();
  EvalReport report;
  report.class_names = std::move(class_names);
  report.videos = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].cols() != classes || labels[i].cols() != classes ||
        scores[i].rows() != labels[i].rows()) {
      throw ShapeError("evaluate: video " + std::to_string(i) +
                       " does not match the class count");
    }
    report.frames += scores[i].rows();
  }

  std::vector<double> column(report.frames);
  std::vector<std::uint8_t> truth(report.frames);
  report.ap.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (std::size_t t = 0; t < scores[i].rows(); ++t, ++k) {
        column[k] = scores[i](t, c);
        truth[k] = labels[i](t, c);
      }
    }
    report.ap[c] = report.frames ? average_precision(column, truth) : std::nullopt;
  }
  const auto evaluated = report.evaluated_classes();
  report.map = report.mean_ap(evaluated);
  return report;
}

Matrix<float> predict_probabilities(const ModelState& model, const Matrix<float>& features) {
  return sigmoid(predict_logits(model.shape, model.params, features));
}

EvalReport evaluate(const ModelState& model, const Dataset& dataset) {
  if (dataset.feature_dim != model.shape.features) {
    throw ShapeError("dimension mismatch: model expects D = " +
                     std::to_string(model.shape.features) + ", dataset has D = " +
                     std::to_string(dataset.feature_dim));
  }
  if (dataset.classes() != model.shape.classes) {
    throw ShapeError("dimension mismatch: model expects C = " +
                     std::to_string(model.shape.classes) + ", dataset has C = " +
                     std::to_string(dataset.classes()));
  }
  std::vector<Matrix<double>> scores;
  std::vector<LabelMask> labels;
  scores.reserve(dataset.videos.size());
  labels.reserve(dataset.videos.size());
  for (const auto& video : dataset.videos) {
    scores.push_back(predict_probabilities(model, video.features).cast<double>());
    labels.push_back(video.labels);
  }
  EvalReport report = evaluate_scores(scores, labels, dataset.class_names);
  report.variant = std::string(to_string(model.shape.variant));
  return report;
}

}  // namespace tsfm
