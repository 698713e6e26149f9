#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

// Plain-loop restatement of the selector: pairwise dot products, mean over
// the other candidates, first maximum. Shares no code with the library.
namespace cotforge::oracle {

inline int select(const Eigen::MatrixXd& e) {
  const int m = static_cast<int>(e.rows());
  if (m == 1) return 0;
  std::vector<double> avg(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      double dot = 0.0;
      for (int k = 0; k < e.cols(); ++k) dot += e(i, k) * e(j, k);
      sum += dot;
    }
    avg[static_cast<std::size_t>(i)] = sum / (m - 1);
  }
  int best = 0;
  for (int i = 1; i < m; ++i)
    if (avg[static_cast<std::size_t>(i)] > avg[static_cast<std::size_t>(best)]) best = i;
  return best;
}

// M in [2,8], dim in [2,64]; some instances carry duplicated rows so ties occur.
inline Eigen::MatrixXd random_instance(std::mt19937& rng) {
  std::uniform_int_distribution<int> mdist(2, 8), ddist(2, 64);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  const int m = mdist(rng), d = ddist(rng);
  Eigen::MatrixXd e(m, d);
  const bool integral = rng() % 4 == 0;
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < d; ++k) e(i, k) = integral ? static_cast<double>(static_cast<int>(rng() % 3) - 1) : v(rng);
  if (rng() % 3 == 0) e.row(m - 1) = e.row(0);
  return e;
}

}  // namespace cotforge::oracle
