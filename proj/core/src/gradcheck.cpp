#include "tsfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace tsfm {
namespace {

GradcheckInstance build_instance(Variant variant, std::uint64_t seed,
                                 std::size_t max_filters, std::size_t max_distributions) {
  Rng rng(seed);
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  GradcheckInstance inst;
  inst.shape.variant = variant;
  inst.shape.classes = pick(1, 4);
  inst.shape.features = pick(1, 8);
  inst.shape.filters = pick(1, std::max<std::size_t>(1, max_filters));
  inst.shape.distributions = pick(1, std::max<std::size_t>(1, max_distributions));
  inst.shape.kernel_length = 2 * pick(0, 4) + 1;
  const std::size_t frames = pick(2, 20);

  std::uniform_real_distribution<double> filter_value(-0.8, 0.8);
  std::uniform_real_distribution<double> weight_value(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  inst.params = zero_params<Wide>(inst.shape);
  for (auto& f : inst.params.filters) {
    for (auto& x : f.centers) x = filter_value(rng);
    for (auto& g : f.widths) {
      // Keep clear of the |tanh| kink at zero.
      do {
        g = filter_value(rng);
      } while (std::fabs(static_cast<double>(g)) < 1e-2);
    }
  }
  for (auto& a : inst.params.attention.flat()) a = normal(rng);
  for (auto& w : inst.params.detector.weight.flat()) w = weight_value(rng);
  for (auto& b : inst.params.detector.bias) b = weight_value(rng);
  for (auto& w : inst.params.detector.baseline_weight.flat()) w = weight_value(rng);
  for (auto& b : inst.params.detector.baseline_bias) b = weight_value(rng);

  inst.features = Matrix<Wide>(frames, inst.shape.features);
  for (auto& x : inst.features.flat()) x = normal(rng);
  inst.labels = LabelMask(frames, inst.shape.classes);
  std::bernoulli_distribution positive(0.4);
  for (auto& z : inst.labels.flat()) z = positive(rng) ? 1 : 0;
  return inst;
}

}  // namespace

GradcheckInstance random_instance(Variant variant, std::uint64_t seed) {
  return build_instance(variant, seed, 3, 2);
}

double relative_error(Wide analytic, Wide numeric) noexcept {
  const Wide scale = std::max({std::fabs(analytic), std::fabs(numeric), Wide{1e-8L}});
  return static_cast<double>(std::fabs(analytic - numeric) / scale);
}

std::vector<std::string> GradcheckReport::failing_groups() const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    if (!g.passed) out.push_back(g.group);
  }
  return out;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json per_group = nlohmann::json::array();
  for (const auto& g : groups) {
    per_group.push_back({{"group", g.group},
                         {"parameters", g.parameters},
                         {"max_relative_error", g.max_relative_error},
                         {"passed", g.passed}});
  }
  return {{"format", "tsfm-gradcheck"},
          {"version", 1},
          {"variant", std::string(to_string(variant))},
          {"seed", seed},
          {"frames", frames},
          {"step", step},
          {"tolerance", tolerance},
          {"passed", passed},
          {"groups", std::move(per_group)}};
}

GradcheckReport gradcheck(const GradcheckInstance& instance, const GradientFn& gradient) {
  const GradientFn analytic_fn =
      gradient ? gradient
               : GradientFn([](const ModelShape& s, const ModelParams<Wide>& p,
                               const Matrix<Wide>& v, const LabelMask& z) {
                   return video_loss_and_gradient(s, p, v, z).gradient;
                 });

  const ModelShape& shape = instance.shape;
  const ModelParams<Wide> analytic =
      analytic_fn(shape, instance.params, instance.features, instance.labels);
  check_params(shape, analytic);

  std::vector<std::span<const Wide>> analytic_tensors;
  analytic.for_each([&](std::string_view, std::span<const Wide> v) {
    analytic_tensors.push_back(v);
  });

  GradcheckReport report;
  report.variant = shape.variant;
  report.frames = instance.features.rows();
  report.step = kGradcheckStep;
  report.tolerance = kGradcheckTolerance;

  std::map<std::string, std::size_t> index_of;
  ModelParams<Wide> probe = instance.params;
  const Wide h = kGradcheckStep;
  std::size_t tensor = 0;
  probe.for_each([&](std::string_view name, std::span<Wide> values) {
    const auto expected = analytic_tensors[tensor++];
    if (values.empty()) return;
    auto [it, inserted] = index_of.emplace(std::string(name), report.groups.size());
    if (inserted) report.groups.push_back({std::string(name)});
    GroupError& group = report.groups[it->second];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Wide saved = values[i];
      values[i] = saved + h;
      const Wide up = video_loss(shape, probe, instance.features, instance.labels);
      values[i] = saved - h;
      const Wide down = video_loss(shape, probe, instance.features, instance.labels);
      values[i] = saved;
      const Wide numeric = (up - down) / (2 * h);
      group.max_relative_error =
          std::max(group.max_relative_error, relative_error(expected[i], numeric));
      ++group.parameters;
    }
  });
  for (auto& g : report.groups) {
    g.passed = g.max_relative_error < kGradcheckTolerance;
    report.passed = report.passed && g.passed;
  }
  return report;
}

GradcheckReport gradcheck(const TrainConfig& config, std::uint64_t seed,
                          const GradientFn& gradient) {
  const auto inst = build_instance(config.variant, seed, std::min<std::size_t>(config.filters, 3),
                                   std::min<std::size_t>(config.distributions, 2));
  GradcheckReport report = gradcheck(inst, gradient);
  report.seed = seed;
  return report;
}

}  // namespace tsfm
