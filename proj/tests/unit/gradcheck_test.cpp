#include "tsfm/gradcheck.hpp"

#include <algorithm>

#include <gtest/gtest.h>

namespace tsfm {
namespace {

TEST(Gradcheck, RandomInstancesRespectSizeLimits) {
  for (Variant v : kAllVariants) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto inst = random_instance(v, seed);
      EXPECT_GE(inst.features.rows(), 2u);
      EXPECT_LE(inst.features.rows(), 20u);
      EXPECT_LE(inst.shape.features, 8u);
      EXPECT_LE(inst.shape.classes, 4u);
      EXPECT_LE(inst.shape.filters, 3u);
      EXPECT_LE(inst.shape.distributions, 2u);
      EXPECT_EQ(inst.shape.kernel_length % 2, 1u);
      EXPECT_LE(inst.shape.kernel_length, 9u);
    }
  }
}

TEST(Gradcheck, DefaultInstancePassesForEveryVariant) {
  for (Variant v : kAllVariants) {
    TrainConfig c;
    c.variant = v;
    const auto report = gradcheck(c, 0);
    EXPECT_TRUE(report.passed) << report.to_json().dump();
    EXPECT_FALSE(report.groups.empty());
    for (const auto& g : report.groups) EXPECT_LT(g.max_relative_error, 1e-4) << g.group;
  }
}

TEST(Gradcheck, ReportsEveryParameterGroup) {
  TrainConfig c;
  c.variant = Variant::kAttended;
  const auto report = gradcheck(c, 3);
  std::vector<std::string> names;
  for (const auto& g : report.groups) names.push_back(g.group);
  const std::vector<std::string> expected = {"filter_centers", "filter_widths", "attention",
                                             "weight", "bias"};
  EXPECT_EQ(names, expected);
}

TEST(Gradcheck, CorruptedBackwardNamesTheGroup) {
  TrainConfig c;
  c.variant = Variant::kRelative;
  const GradientFn corrupted = [](const ModelShape& s, const ModelParams<Wide>& p,
                                  const Matrix<Wide>& v, const LabelMask& z) {
    auto g = video_loss_and_gradient(s, p, v, z).gradient;
    g.attention(0, 0) += 0.01L;
    return g;
  };
  const auto report = gradcheck(c, 1, corrupted);
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.failing_groups(), std::vector<std::string>{"attention"});

  const GradientFn flipped = [](const ModelShape& s, const ModelParams<Wide>& p,
                                const Matrix<Wide>& v, const LabelMask& z) {
    auto g = video_loss_and_gradient(s, p, v, z).gradient;
    for (auto& f : g.filters) {
      for (auto& x : f.widths) x = -x;
    }
    return g;
  };
  EXPECT_EQ(gradcheck(c, 1, flipped).failing_groups(), std::vector<std::string>{"filter_widths"});
}

TEST(Gradcheck, IgnoresConfiguredDropout) {
  TrainConfig c;
  c.dropout = 0.9;
  const auto a = gradcheck(c, 5);
  c.dropout = 0.0;
  const auto b = gradcheck(c, 5);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_TRUE(a.passed);
}

TEST(Gradcheck, RelativeErrorIsGuarded) {
  EXPECT_EQ(relative_error(0, 0), 0.0);
  EXPECT_NEAR(relative_error(1e-12L, 0), 1e-4, 1e-12);
  EXPECT_NEAR(relative_error(2, 1), 0.5, 1e-15);
}

}  // namespace
}  // namespace tsfm
