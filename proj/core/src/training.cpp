#include "tsfm/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tsfm/error.hpp"
#include "tsfm/optimizer.hpp"

namespace tsfm {
namespace {

void check_dataset(const ModelState& state, const Dataset& dataset) {
  if (dataset.videos.empty()) throw ShapeError("training: dataset has no videos");
  if (dataset.feature_dim != state.shape.features) {
    throw ShapeError("dimension mismatch: model expects D = " +
                     std::to_string(state.shape.features) + ", dataset has D = " +
                     std::to_string(dataset.feature_dim));
  }
  if (dataset.classes() != state.shape.classes) {
    throw ShapeError("dimension mismatch: model expects C = " +
                     std::to_string(state.shape.classes) + ", dataset has C = " +
                     std::to_string(dataset.classes()));
  }
  dataset.validate();
}

// Distinct indices when the dataset is large enough, otherwise with
// replacement.
std::vector<std::size_t> sample_batch(std::size_t videos, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> out(batch);
  if (videos >= batch) {
    std::vector<std::size_t> pool(videos);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j =
          std::uniform_int_distribution<std::size_t>(i, videos - 1)(rng);
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, videos - 1);
    for (auto& i : out) i = pick(rng);
  }
  return out;
}

template <typename Real>
void accumulate(ModelParams<Real>& total, const ModelParams<Real>& grad) {
  std::vector<std::span<const Real>> src;
  grad.for_each([&](std::string_view, std::span<const Real> v) { src.push_back(v); });
  std::size_t k = 0;
  total.for_each([&](std::string_view, std::span<Real> v) {
    const auto s = src[k++];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i];
  });
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (lr_decay_every == 0) fail("lr_decay_every must be >= 1");
  if (!(lr_decay_factor > 0.0) || !std::isfinite(lr_decay_factor)) {
    fail("lr_decay_factor must be finite and > 0");
  }
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (filters == 0) fail("filters must be >= 1");
  if (distributions == 0) fail("distributions must be >= 1");
  if (kernel_length == 0 || kernel_length % 2 == 0) fail("kernel_length must be odd");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"variant", std::string(to_string(variant))},
          {"lr", lr},
          {"lr_decay_every", lr_decay_every},
          {"lr_decay_factor", lr_decay_factor},
          {"iterations", iterations},
          {"batch_size", batch_size},
          {"dropout", dropout},
          {"filters", filters},
          {"distributions", distributions},
          {"kernel_length", kernel_length},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  take("lr", c.lr);
  take("lr_decay_every", c.lr_decay_every);
  take("lr_decay_factor", c.lr_decay_factor);
  take("iterations", c.iterations);
  take("batch_size", c.batch_size);
  take("dropout", c.dropout);
  take("filters", c.filters);
  take("distributions", c.distributions);
  take("kernel_length", c.kernel_length);
  take("seed", c.seed);
  return c;
}

double learning_rate_at(const TrainConfig& config, std::size_t iteration) {
  const auto steps = static_cast<double>(iteration / config.lr_decay_every);
  return config.lr * std::pow(config.lr_decay_factor, steps);
}

ModelState init_model(const TrainConfig& config, std::vector<std::string> class_names,
                      std::size_t feature_dim) {
  config.validate();
  ModelState state;
  state.config = config;
  state.shape = ModelShape{config.variant,      class_names.size(),   feature_dim,
                           config.filters,      config.distributions, config.kernel_length};
  state.shape.validate();
  state.class_names = std::move(class_names);
  state.rng.seed(config.seed);
  state.params = init_params<float>(state.shape, state.rng);
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  return state;
}

Matrix<float> apply_dropout(const Matrix<float>& features, double p, Rng& rng) {
  Matrix<float> out = features;
  if (p <= 0.0) return out;
  const float scale = static_cast<float>(1.0 / (1.0 - p));
  std::bernoulli_distribution keep(1.0 - p);
  for (auto& x : out.flat()) x = keep(rng) ? x * scale : 0.0f;
  return out;
}

void train_until(ModelState& state, const Dataset& dataset, std::size_t stop_iteration,
                 const IterationCallback& on_step) {
  check_dataset(state, dataset);
  const TrainConfig& cfg = state.config;

  while (state.iteration < stop_iteration) {
    const double lr = learning_rate_at(cfg, state.iteration);
    const auto batch = sample_batch(dataset.videos.size(), cfg.batch_size, state.rng);

    // Gradients are summed in batch order so results never depend on how
    // the per-video work is scheduled.
    ModelParams<float> total = state.params.zeros_like();
    double loss = 0.0;
    for (std::size_t index : batch) {
      const Video& video = dataset.videos[index];
      const Matrix<float> features = apply_dropout(video.features, cfg.dropout, state.rng);
      const auto result =
          video_loss_and_gradient(state.shape, state.params, features, video.labels);
      if (!std::isfinite(result.loss)) {
        throw NumericError("non-finite loss at iteration " +
                           std::to_string(state.iteration + 1) + " on video " + video.id);
      }
      loss += result.loss;
      accumulate(total, result.gradient);
    }

    const float inv = 1.0f / static_cast<float>(batch.size());
    total.for_each([&](std::string_view, std::span<float> g) {
      for (auto& x : g) x *= inv;
    });

    const std::uint64_t step = state.iteration + 1;
    std::vector<std::span<float>> grads, firsts, seconds;
    total.for_each([&](std::string_view, std::span<float> v) { grads.push_back(v); });
    state.adam_m.for_each([&](std::string_view, std::span<float> v) { firsts.push_back(v); });
    state.adam_v.for_each([&](std::string_view, std::span<float> v) { seconds.push_back(v); });
    std::size_t k = 0;
    state.params.for_each([&](std::string_view, std::span<float> p) {
      adam_update<float>(p, grads[k], firsts[k], seconds[k], step, lr);
      ++k;
    });

    state.iteration = step;
    if (on_step) on_step({state.iteration, lr, loss / static_cast<double>(batch.size())});
  }
}

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const IterationCallback& on_step) {
  TrainResult result{init_model(config, dataset.class_names, dataset.feature_dim), {}};
  result.history.reserve(config.iterations);
  train_until(result.state, dataset, config.iterations, [&](const IterationRecord& r) {
    result.history.push_back(r);
    if (on_step) on_step(r);
  });
  return result;
}

}  // namespace tsfm
