#include <random>

#include <benchmark/benchmark.h>

#include "tsfm/eval.hpp"
#include "tsfm/filter.hpp"
#include "tsfm/model.hpp"
#include "tsfm/superevent.hpp"
#include "tsfm/synthetic.hpp"
#include "tsfm/training.hpp"

namespace {

using namespace tsfm;

Matrix<float> random_features(std::size_t T, std::size_t D, Rng& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Matrix<float> m(T, D);
  for (auto& x : m.flat()) x = n(rng);
  return m;
}

LabelMask random_labels(std::size_t T, std::size_t C, Rng& rng) {
  std::bernoulli_distribution b(0.1);
  LabelMask z(T, C);
  for (auto& x : z.flat()) x = b(rng);
  return z;
}

void BM_MaterializeFilter(benchmark::State& state) {
  Rng rng(1);
  const auto params = init_filter<float>(3, rng);
  const auto T = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(materialize_filter(params, T));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MaterializeFilter)->Arg(64)->Arg(512)->Arg(4096);

void BM_PoolAttended(benchmark::State& state) {
  Rng rng(2);
  const auto T = static_cast<std::size_t>(state.range(0));
  const auto D = static_cast<std::size_t>(state.range(1));
  std::vector<MaterializedFilter<float>> filters;
  for (int m = 0; m < 5; ++m) filters.push_back(materialize_filter(init_filter<float>(3, rng), T));
  const auto v = random_features(T, D, rng);
  const AttentionWeights<float> w{Matrix<float>(65, 5)};
  for (auto _ : state) benchmark::DoNotOptimize(pool_attended<float>(filters, w, v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PoolAttended)->Args({256, 16})->Args({1024, 1024});

// One video's forward and backward pass, the unit of work of a training step.
void BM_VideoLossAndGradient(benchmark::State& state) {
  Rng rng(3);
  const auto variant = static_cast<Variant>(state.range(0));
  const auto T = static_cast<std::size_t>(state.range(1));
  const auto L = static_cast<std::size_t>(state.range(2));
  const ModelShape shape{variant, 8, 16, 5, 3, L};
  const auto params = init_params<float>(shape, rng);
  const auto v = random_features(T, shape.features, rng);
  const auto z = random_labels(T, shape.classes, rng);
  for (auto _ : state) benchmark::DoNotOptimize(video_loss_and_gradient(shape, params, v, z));
  state.SetLabel(std::string(to_string(variant)));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_VideoLossAndGradient)
    ->Args({static_cast<int>(Variant::kBaseline), 200, 15})
    ->Args({static_cast<int>(Variant::kMean), 200, 15})
    ->Args({static_cast<int>(Variant::kSingle), 200, 15})
    ->Args({static_cast<int>(Variant::kAttended), 200, 15})
    ->Args({static_cast<int>(Variant::kRelative), 200, 15})
    ->Args({static_cast<int>(Variant::kRelative), 200, 71});

void BM_TrainStep(benchmark::State& state) {
  SynthConfig sc;
  sc.videos = 64;
  const auto data = generate_synthetic(sc);
  TrainConfig tc;
  tc.variant = static_cast<Variant>(state.range(0));
  tc.lr = 0.01;
  auto model = init_model(tc, data.class_names, data.feature_dim);
  for (auto _ : state) train_until(model, data, model.iteration + 1);
  state.SetLabel(std::string(to_string(tc.variant)));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Variant::kAttended))
    ->Arg(static_cast<int>(Variant::kRelative))
    ->Unit(benchmark::kMillisecond);

void BM_AveragePrecision(benchmark::State& state) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  std::vector<std::uint8_t> z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    z[i] = u(rng) < 0.1;
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(s, z));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AveragePrecision)->Arg(10000)->Arg(1000000);

}  // namespace

BENCHMARK_MAIN();
