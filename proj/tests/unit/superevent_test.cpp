#include "tsfm/superevent.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "../support/random.hpp"
#include "tsfm/error.hpp"

namespace tsfm {
namespace {

using Wide = long double;
using testing_support::random_matrix;
using testing_support::to_grid;

MaterializedFilter<Wide> explicit_filter(std::size_t T, std::size_t N,
                                         std::initializer_list<Wide> values) {
  MaterializedFilter<Wide> f;
  f.values = Matrix<Wide>(T, N);
  std::copy(values.begin(), values.end(), f.values.data());
  return f;
}

Matrix<Wide> matrix_of(std::size_t rows, std::size_t cols, std::initializer_list<Wide> values) {
  Matrix<Wide> m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::vector<MaterializedFilter<Wide>> random_filters(std::size_t M, std::size_t N,
                                                     std::size_t length, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<MaterializedFilter<Wide>> out;
  for (std::size_t m = 0; m < M; ++m) {
    FilterParams<Wide> p(N);
    for (std::size_t n = 0; n < N; ++n) {
      p.centers[n] = u(rng);
      p.widths[n] = u(rng);
    }
    out.push_back(materialize_filter(p, length));
  }
  return out;
}

std::vector<oracle::Grid> grids(const std::vector<MaterializedFilter<Wide>>& filters) {
  std::vector<oracle::Grid> out;
  for (const auto& f : filters) out.push_back(to_grid(f.values));
  return out;
}

TEST(SoftAttention, EqualLogitsGiveUniformRows) {
  const auto a = soft_attention(AttentionWeights<Wide>{Matrix<Wide>(2, 5)});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.flat()[i], 0.2L);
}

TEST(SoftAttention, TwoLogitRowMatchesScalarSoftmax) {
  const auto a = soft_attention(AttentionWeights<Wide>{matrix_of(1, 2, {1, 0})});
  EXPECT_NEAR(static_cast<double>(a(0, 0)), 0.731058578630004879, 1e-16);
  EXPECT_NEAR(static_cast<double>(a(0, 1)), 0.268941421369995121, 1e-16);
}

TEST(SoftAttention, ShiftInvariantBitwise) {
  // Dyadic logits and integer shifts keep the max-subtraction exact.
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> eighths(-40, 40);
  std::uniform_int_distribution<int> shift(-100, 100);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix<double> w(3, 4);
    for (auto& x : w.flat()) x = eighths(rng) / 8.0;
    auto shifted = w;
    for (std::size_t c = 0; c < 3; ++c) {
      const double s = shift(rng);
      for (std::size_t m = 0; m < 4; ++m) shifted(c, m) += s;
    }
    EXPECT_EQ(soft_attention(AttentionWeights<double>{w}),
              soft_attention(AttentionWeights<double>{shifted}));
  }
}

TEST(SoftAttention, RowsLieOnSimplexAndSaturate) {
  std::mt19937_64 rng(4);
  const auto w = random_matrix<double>(50, 6, rng, -40, 40);
  const auto a = soft_attention(AttentionWeights<double>{w});
  for (std::size_t c = 0; c < 50; ++c) {
    double total = 0;
    for (std::size_t m = 0; m < 6; ++m) {
      EXPECT_GE(a(c, m), 0.0);
      total += a(c, m);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  const auto saturated = soft_attention(AttentionWeights<double>{Matrix<double>(1, 3)});
  EXPECT_NEAR(saturated(0, 0), 1.0 / 3.0, 1e-15);
  Matrix<double> one_hot(1, 3);
  one_hot(0, 1) = 40.0;
  const auto s = soft_attention(AttentionWeights<double>{one_hot});
  EXPECT_NEAR(s(0, 1), 1.0, 1e-9);
}

TEST(SoftAttention, RejectsNonFiniteLogits) {
  Matrix<double> w(1, 2);
  w(0, 0) = std::nan("");
  EXPECT_THROW(soft_attention(AttentionWeights<double>{w}), NumericError);
}

TEST(PoolSingle, HandComputedProduct) {
  // F is 3 x 2, v is 3 x 2; S[n * D + d] = sum_t F(t, n) v(t, d).
  const auto f = explicit_filter(3, 2, {0.5L, 0.1L, 0.25L, 0.2L, 0.25L, 0.7L});
  const auto v = matrix_of(3, 2, {1, -1, 2, 0, 4, 3});
  const auto s = pool_single(f, v);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_NEAR(static_cast<double>(s[0]), 0.5 + 0.5 + 1.0, 1e-18);
  EXPECT_NEAR(static_cast<double>(s[1]), -0.5 + 0.0 + 0.75, 1e-18);
  EXPECT_NEAR(static_cast<double>(s[2]), 0.1 + 0.4 + 2.8, 1e-18);
  EXPECT_NEAR(static_cast<double>(s[3]), -0.1 + 0.0 + 2.1, 1e-18);
}

TEST(PoolSingle, UniformColumnGivesMeanAndOneHotGivesFrame) {
  std::mt19937_64 rng(6);
  const auto v = random_matrix<Wide>(4, 3, rng);
  const auto f = explicit_filter(4, 2, {0.25L, 0, 0.25L, 0, 0.25L, 1, 0.25L, 0});
  const auto s = pool_single(f, v);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_NEAR(static_cast<double>(s[d]),
                static_cast<double>((v(0, d) + v(1, d) + v(2, d) + v(3, d)) / 4), 1e-18);
    EXPECT_EQ(s[3 + d], v(2, d));
  }
}

TEST(PoolSingle, StaysWithinFeatureRange) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + trial;
    const auto v = random_matrix<Wide>(T, 4, rng, -3, 3);
    const auto filters = random_filters(1, 3, T, rng);
    const auto s = pool_single(filters[0], v);
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t d = 0; d < 4; ++d) {
        Wide lo = v(0, d), hi = v(0, d);
        for (std::size_t t = 0; t < T; ++t) {
          lo = std::min(lo, v(t, d));
          hi = std::max(hi, v(t, d));
        }
        EXPECT_GE(s[n * 4 + d], lo - 1e-15L);
        EXPECT_LE(s[n * 4 + d], hi + 1e-15L);
      }
    }
  }
}

TEST(PoolSingle, RejectsLengthMismatch) {
  const auto f = explicit_filter(3, 1, {0.2L, 0.3L, 0.5L});
  EXPECT_THROW(pool_single(f, Matrix<Wide>(4, 2)), ShapeError);
}

TEST(PoolAttended, HandComputedMixture) {
  // C = 2, M = 2, T = 3, D = 1, N = 1.
  const std::vector<MaterializedFilter<Wide>> filters = {
      explicit_filter(3, 1, {0.2L, 0.3L, 0.5L}), explicit_filter(3, 1, {0.6L, 0.3L, 0.1L})};
  const auto v = matrix_of(3, 1, {1, -2, 4});
  const AttentionWeights<Wide> w{matrix_of(2, 2, {1, 0, 0, 2})};
  const auto out = pool_attended(std::span<const MaterializedFilter<Wide>>(filters), w, v);
  EXPECT_NEAR(static_cast<double>(out.pooled(0, 0)), 1.6, 1e-18);
  EXPECT_NEAR(static_cast<double>(out.pooled(1, 0)), 0.4, 1e-18);
  EXPECT_NEAR(static_cast<double>(out.rep(0, 0)), 1.27727029435600585510, 1e-17);
  EXPECT_NEAR(static_cast<double>(out.rep(1, 0)), 0.54304350642654106713, 1e-17);
}

TEST(PoolAttended, SaturatedRowAndIdenticalFiltersReduceToSingle) {
  std::mt19937_64 rng(9);
  const auto v = random_matrix<Wide>(12, 3, rng);
  const auto filters = random_filters(3, 2, 12, rng);
  Matrix<Wide> logits(1, 3);
  logits(0, 2) = 60;
  const auto out = pool_attended(std::span<const MaterializedFilter<Wide>>(filters),
                                 AttentionWeights<Wide>{logits}, v);
  const auto single = pool_single(filters[2], v);
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_NEAR(static_cast<double>(out.rep(0, i)), static_cast<double>(single[i]), 1e-9);
  }

  const std::vector<MaterializedFilter<Wide>> same = {filters[0], filters[0]};
  const auto mixed = pool_attended(std::span<const MaterializedFilter<Wide>>(same),
                                   AttentionWeights<Wide>{random_matrix<Wide>(2, 2, rng, -3, 3)}, v);
  const auto base = pool_single(filters[0], v);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(static_cast<double>(mixed.rep(c, i)), static_cast<double>(base[i]), 1e-15);
    }
  }
}

TEST(PoolAttended, MatchesMixThenPoolOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 1 + trial % 17, M = 1 + trial % 3, C = 1 + trial % 4;
    const auto v = random_matrix<Wide>(T, 3, rng);
    const auto filters = random_filters(M, 2, T, rng);
    const auto logits = random_matrix<Wide>(C, M, rng, -2, 2);
    const auto out = pool_attended(std::span<const MaterializedFilter<Wide>>(filters),
                                   AttentionWeights<Wide>{logits}, v);
    const auto expected = oracle::attended(grids(filters), to_grid(logits), to_grid(v));
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_LT(oracle::relative_error(out.rep(c, i), expected[c][i]), 1e-15L);
      }
    }
  }
}

TEST(PoolAttended, RejectsInconsistentShapes) {
  std::mt19937_64 rng(12);
  const auto filters = random_filters(2, 2, 5, rng);
  const auto v = random_matrix<Wide>(5, 2, rng);
  const std::span<const MaterializedFilter<Wide>> span(filters);
  EXPECT_THROW(pool_attended(span, AttentionWeights<Wide>{Matrix<Wide>(2, 3)}, v), ShapeError);
  EXPECT_THROW(pool_attended(span, AttentionWeights<Wide>{Matrix<Wide>(2, 2)},
                             random_matrix<Wide>(6, 2, rng)),
               ShapeError);
  EXPECT_THROW(pool_attended(std::span<const MaterializedFilter<Wide>>(),
                             AttentionWeights<Wide>{Matrix<Wide>(2, 0)}, v),
               ShapeError);
}

TEST(PoolRelative, SingleFrameKernelIsIdentity) {
  std::mt19937_64 rng(13);
  const auto v = random_matrix<Wide>(9, 4, rng);
  const auto filters = random_filters(3, 2, 1, rng);
  const auto logits = random_matrix<Wide>(2, 3, rng);
  const auto out = pool_relative(std::span<const MaterializedFilter<Wide>>(filters),
                                 AttentionWeights<Wide>{logits}, v, RelativeConfig{1});
  for (std::size_t t = 0; t < 9; ++t) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t d = 0; d < 4; ++d) {
          EXPECT_NEAR(static_cast<double>(out.rep(t * 2 + c, n * 4 + d)),
                      static_cast<double>(v(t, d)), 1e-18);
        }
      }
    }
  }
}

TEST(PoolRelative, HandComputedSlidingProductWithZeroPadding) {
  // T = 5, L = 3, D = 1, kernel [0.2, 0.5, 0.3] applied at t - 1, t, t + 1.
  const std::vector<MaterializedFilter<Wide>> kernel = {explicit_filter(3, 1, {0.2L, 0.5L, 0.3L})};
  const auto v = matrix_of(5, 1, {1, 2, 3, 4, 5});
  const auto out = pool_relative(std::span<const MaterializedFilter<Wide>>(kernel),
                                 AttentionWeights<Wide>{Matrix<Wide>(1, 1)}, v, RelativeConfig{3});
  const double expected[] = {1.1, 2.1, 3.1, 4.1, 3.3};
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_NEAR(static_cast<double>(out.rep(t, 0)), expected[t], 1e-18);
    EXPECT_NEAR(static_cast<double>(out.pooled(t, 0)), expected[t], 1e-18);
  }
}

TEST(PoolRelative, InteriorFrameOfConstantInputMatchesGlobalPool) {
  std::mt19937_64 rng(14);
  const std::size_t L = 7;
  Matrix<Wide> v(20, 3);
  for (std::size_t t = 0; t < 20; ++t) {
    v(t, 0) = 1.5L;
    v(t, 1) = -2;
    v(t, 2) = 0.25L;
  }
  const auto filters = random_filters(2, 2, L, rng);
  const auto logits = random_matrix<Wide>(3, 2, rng);
  const auto rel = pool_relative(std::span<const MaterializedFilter<Wide>>(filters),
                                 AttentionWeights<Wide>{logits}, v, RelativeConfig{L});
  Matrix<Wide> window(L, 3);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t d = 0; d < 3; ++d) window(t, d) = v(t, d);
  }
  const auto global = pool_attended(std::span<const MaterializedFilter<Wide>>(filters),
                                    AttentionWeights<Wide>{logits}, window);
  for (std::size_t t = L / 2; t + L / 2 < 20; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(static_cast<double>(rel.rep(t * 3 + c, i)),
                    static_cast<double>(global.rep(c, i)), 1e-15);
      }
    }
  }
}

TEST(PoolRelative, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 1 + trial % 13, L = 1 + 2 * (trial % 5), M = 1 + trial % 3, C = 1 + trial % 3;
    const auto v = random_matrix<Wide>(T, 2, rng);
    const auto filters = random_filters(M, 2, L, rng);
    const auto logits = random_matrix<Wide>(C, M, rng, -2, 2);
    const auto out = pool_relative(std::span<const MaterializedFilter<Wide>>(filters),
                                   AttentionWeights<Wide>{logits}, v, RelativeConfig{L});
    const auto expected = oracle::relative(grids(filters), to_grid(logits), to_grid(v));
    for (std::size_t r = 0; r < T * C; ++r) {
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(static_cast<double>(out.rep(r, i)), static_cast<double>(expected[r][i]), 1e-15);
      }
    }
  }
}

TEST(PoolRelative, RejectsEvenOrZeroLength) {
  EXPECT_THROW(RelativeConfig{0}.validate(), std::invalid_argument);
  EXPECT_THROW(RelativeConfig{4}.validate(), std::invalid_argument);
  EXPECT_NO_THROW(RelativeConfig{15}.validate());
  std::mt19937_64 rng(16);
  const auto filters = random_filters(1, 1, 3, rng);
  EXPECT_THROW(pool_relative(std::span<const MaterializedFilter<Wide>>(filters),
                             AttentionWeights<Wide>{Matrix<Wide>(1, 1)},
                             random_matrix<Wide>(4, 1, rng), RelativeConfig{5}),
               ShapeError);
}

TEST(PoolBaseline, FourFrameRamp) {
  const auto v = matrix_of(4, 1, {1, 2, 3, 4});
  EXPECT_EQ(pool_baseline(BaselinePooling::kMean, v), std::vector<Wide>{2.5L});
  EXPECT_EQ(pool_baseline(BaselinePooling::kMax, v), std::vector<Wide>{4});
  const std::vector<Wide> pyramid = {2.5L, 1.5L, 3.5L, 1, 2, 3, 4};
  EXPECT_EQ(pool_baseline(BaselinePooling::kPyramid3, v), pyramid);
}

TEST(PoolBaseline, SingleFrameAndConstantInput) {
  const auto one = matrix_of(1, 2, {3, -1});
  const auto pyramid = pool_baseline(BaselinePooling::kPyramid3, one);
  ASSERT_EQ(pyramid.size(), 14u);
  for (std::size_t s = 0; s < 7; ++s) {
    EXPECT_EQ(pyramid[2 * s], 3.0L);
    EXPECT_EQ(pyramid[2 * s + 1], -1.0L);
  }
  Matrix<Wide> constant(6, 2);
  for (std::size_t t = 0; t < 6; ++t) {
    constant(t, 0) = 0.5L;
    constant(t, 1) = 2;
  }
  for (auto kind : {BaselinePooling::kMax, BaselinePooling::kMean, BaselinePooling::kPyramid3}) {
    const auto out = pool_baseline(kind, constant);
    EXPECT_EQ(out.size(), 2 * pooled_segments(kind));
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i % 2 ? 2.0L : 0.5L);
  }
}

TEST(PoolBaseline, MatchesSegmentOracle) {
  std::mt19937_64 rng(17);
  for (std::size_t T = 1; T <= 40; ++T) {
    const auto v = random_matrix<Wide>(T, 3, rng);
    const auto grid = to_grid(v);
    const auto pyramid = pool_baseline(BaselinePooling::kPyramid3, v);
    const auto expected = oracle::pyramid3(grid);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_NEAR(static_cast<double>(pyramid[i]), static_cast<double>(expected[i]), 1e-15) << T;
    }
    const auto mx = pool_baseline(BaselinePooling::kMax, v);
    const auto expected_max = oracle::max_pool(grid);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(mx[d], expected_max[d]);
  }
  EXPECT_THROW(pool_baseline(BaselinePooling::kMean, Matrix<Wide>(0, 2)), ShapeError);
}

// Finite-difference checks of the pooling backward passes on the scalar
// objective sum(U .* rep).
template <typename Fn>
Wide central_difference(Wide& x, Fn&& objective) {
  const Wide h = 1e-4L, saved = x;
  x = saved + h;
  const Wide up = objective();
  x = saved - h;
  const Wide down = objective();
  x = saved;
  return (up - down) / (2 * h);
}

Wide dot(const Matrix<Wide>& a, const Matrix<Wide>& b) {
  Wide total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a.flat()[i] * b.flat()[i];
  return total;
}

Wide guarded_error(Wide a, Wide b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), Wide{1e-8L}});
}

TEST(PoolBackward, AttendedMatchesFiniteDifferences) {
  std::mt19937_64 rng(18);
  const std::size_t T = 10, D = 4, M = 3, N = 2, C = 3;
  auto v = random_matrix<Wide>(T, D, rng);
  std::vector<MaterializedFilter<Wide>> filters;
  for (std::size_t m = 0; m < M; ++m) {
    MaterializedFilter<Wide> f;
    f.values = random_matrix<Wide>(T, N, rng, 0.0, 1.0);
    filters.push_back(f);
  }
  AttentionWeights<Wide> w{random_matrix<Wide>(C, M, rng, -2, 2)};
  const auto upstream = random_matrix<Wide>(C, N * D, rng);
  auto objective = [&] {
    return dot(pool_attended(std::span<const MaterializedFilter<Wide>>(filters), w, v).rep, upstream);
  };
  const auto fwd = pool_attended(std::span<const MaterializedFilter<Wide>>(filters), w, v);
  const auto g = pool_attended_backward(std::span<const MaterializedFilter<Wide>>(filters), fwd, v, upstream);
  for (std::size_t i = 0; i < w.logits.size(); ++i) {
    EXPECT_LT(guarded_error(g.logits.flat()[i], central_difference(w.logits.flat()[i], objective)), 1e-4L);
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < T * N; ++i) {
      EXPECT_LT(guarded_error(g.filters[m].flat()[i],
                              central_difference(filters[m].values.flat()[i], objective)),
                1e-4L);
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_LT(guarded_error(g.features.flat()[i], central_difference(v.flat()[i], objective)), 1e-4L);
  }
}

TEST(PoolBackward, RelativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(19);
  const std::size_t T = 8, D = 3, M = 2, N = 2, C = 2, L = 5;
  auto v = random_matrix<Wide>(T, D, rng);
  std::vector<MaterializedFilter<Wide>> filters;
  for (std::size_t m = 0; m < M; ++m) {
    MaterializedFilter<Wide> f;
    f.values = random_matrix<Wide>(L, N, rng, 0.0, 1.0);
    filters.push_back(f);
  }
  AttentionWeights<Wide> w{random_matrix<Wide>(C, M, rng, -2, 2)};
  const RelativeConfig cfg{L};
  const auto upstream = random_matrix<Wide>(T * C, N * D, rng);
  auto objective = [&] {
    return dot(pool_relative(std::span<const MaterializedFilter<Wide>>(filters), w, v, cfg).rep,
               upstream);
  };
  const auto fwd = pool_relative(std::span<const MaterializedFilter<Wide>>(filters), w, v, cfg);
  const auto g = pool_relative_backward(std::span<const MaterializedFilter<Wide>>(filters), fwd, v,
                                        cfg, upstream);
  for (std::size_t i = 0; i < w.logits.size(); ++i) {
    EXPECT_LT(guarded_error(g.logits.flat()[i], central_difference(w.logits.flat()[i], objective)), 1e-4L);
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < L * N; ++i) {
      EXPECT_LT(guarded_error(g.filters[m].flat()[i],
                              central_difference(filters[m].values.flat()[i], objective)),
                1e-4L);
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_LT(guarded_error(g.features.flat()[i], central_difference(v.flat()[i], objective)), 1e-4L);
  }
}

TEST(PoolBackward, SingleMatchesFiniteDifferencesAndZeroUpstream) {
  std::mt19937_64 rng(20);
  const std::size_t T = 6, D = 2, N = 3;
  auto v = random_matrix<Wide>(T, D, rng);
  MaterializedFilter<Wide> f;
  f.values = random_matrix<Wide>(T, N, rng, 0.0, 1.0);
  const auto upstream = random_matrix<Wide>(1, N * D, rng);
  auto objective = [&] {
    const auto s = pool_single(f, v);
    Wide total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) total += s[i] * upstream.flat()[i];
    return total;
  };
  const auto g = pool_single_backward(f, v, std::span<const Wide>(upstream.flat()));
  for (std::size_t i = 0; i < T * N; ++i) {
    EXPECT_LT(guarded_error(g.filter.flat()[i], central_difference(f.values.flat()[i], objective)), 1e-4L);
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_LT(guarded_error(g.features.flat()[i], central_difference(v.flat()[i], objective)), 1e-4L);
  }
  const std::vector<Wide> zeros(N * D, 0);
  const auto z = pool_single_backward(f, v, std::span<const Wide>(zeros));
  for (auto x : z.filter.flat()) EXPECT_EQ(x, 0.0L);
  for (auto x : z.features.flat()) EXPECT_EQ(x, 0.0L);
}

TEST(PoolBackward, SoftmaxBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  auto w = random_matrix<Wide>(3, 4, rng, -2, 2);
  const auto upstream = random_matrix<Wide>(3, 4, rng);
  auto objective = [&] { return dot(soft_attention(AttentionWeights<Wide>{w}), upstream); };
  const auto g = softmax_backward(soft_attention(AttentionWeights<Wide>{w}), upstream);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_LT(guarded_error(g.flat()[i], central_difference(w.flat()[i], objective)), 1e-4L);
  }
}

}  // namespace
}  // namespace tsfm
