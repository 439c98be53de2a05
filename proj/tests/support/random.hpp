#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tsfm/matrix.hpp"

namespace testing_support {

template <typename Real>
tsfm::Matrix<Real> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  tsfm::Matrix<Real> m(rows, cols);
  for (auto& x : m.flat()) x = static_cast<Real>(u(rng));
  return m;
}

template <typename Real>
oracle::Grid to_grid(const tsfm::Matrix<Real>& m) {
  oracle::Grid g(m.rows(), std::vector<oracle::Real>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
  return g;
}

}  // namespace testing_support
