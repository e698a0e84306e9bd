#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "msra/scenario.hpp"

namespace msra::test {

inline GaussianModel bivariate(double rho, double s1 = 1.0, double s2 = 1.0) {
  GaussianModel g{Vector::Zero(2), Matrix(2, 2)};
  g.covariance << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
  return g;
}

inline GaussianModel trivariate(double rho) {
  GaussianModel g{Vector::Zero(3), Matrix::Zero(3, 3)};
  g.covariance << 0.5, 0.5 * rho, 0.0, 0.5 * rho, 0.5, 0.0, 0.0, 0.0, 0.6;
  return g;
}

inline ScenarioSet from_rows(RowMatrix m) { return ScenarioSet(std::move(m), 0, "fixed"); }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("msra_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Independently shuffles the rows of one column with a fixed seed.
inline ScenarioSet shuffle_column(const ScenarioSet& set, Eigen::Index column, unsigned seed) {
  RowMatrix m = set.data();
  std::vector<double> col(m.rows());
  for (Eigen::Index s = 0; s < m.rows(); ++s) col[static_cast<std::size_t>(s)] = m(s, column);
  std::mt19937_64 gen(seed);
  std::shuffle(col.begin(), col.end(), gen);
  for (Eigen::Index s = 0; s < m.rows(); ++s) m(s, column) = col[static_cast<std::size_t>(s)];
  return ScenarioSet(std::move(m), set.seed(), set.model_tag() + "+shuffled");
}

}  // namespace msra::test
