#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/model.hpp"

namespace tsfm {

/// Trainer settings. Defaults: Adam at 0.1,
/// divided by 10 every 1000 iterations, 5000 iterations of 32 videos,
/// input dropout 0.5, M = 5 filters of N = 3 distributions.
struct TrainConfig {
  Variant variant = Variant::kAttended;
  double lr = 0.1;
  std::size_t lr_decay_every = 1000;
  double lr_decay_factor = 0.1;
  std::size_t iterations = 5000;
  std::size_t batch_size = 32;
  double dropout = 0.5;
  std::size_t filters = 5;
  std::size_t distributions = 3;
  std::size_t kernel_length = 15;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);

  bool operator==(const TrainConfig&) const = default;
};

/// lr * decay_factor ^ floor(iteration / decay_every), iteration from 0.
double learning_rate_at(const TrainConfig& config, std::size_t iteration);

/// Everything needed to resume training bit-for-bit.
struct ModelState {
  TrainConfig config;
  ModelShape shape;
  std::vector<std::string> class_names;
  ModelParams<float> params;
  ModelParams<float> adam_m;
  ModelParams<float> adam_v;
  std::uint64_t iteration = 0;
  Rng rng;

  bool operator==(const ModelState&) const = default;
};

ModelState init_model(const TrainConfig& config,
                      std::vector<std::string> class_names,
                      std::size_t feature_dim);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based count of completed steps
  double lr = 0.0;
  double loss = 0.0;          // mean over the batch, dropout applied
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Inverted dropout: each entry is zeroed with probability p and survivors
/// are scaled by 1 / (1 - p). Returns a copy for p == 0.
Matrix<float> apply_dropout(const Matrix<float>& features, double p, Rng& rng);

/// Runs steps until `state.iteration == stop_iteration`.
///
/// Throws ShapeError if the dataset does not match the model and
/// NumericError on a non-finite loss.
void train_until(ModelState& state, const Dataset& dataset,
                 std::size_t stop_iteration, const IterationCallback& on_step = {});

struct TrainResult {
  ModelState state;
  std::vector<IterationRecord> history;
};

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const IterationCallback& on_step = {});

}  // namespace tsfm
