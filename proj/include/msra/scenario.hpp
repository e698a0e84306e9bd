#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msra/common.hpp"

namespace msra {

/// Stored matrix of simulated loss vectors: one row per scenario, one column
/// per risk component. Positive entries are losses, negative entries profits.
/// Every evaluation over the set reuses the same rows (common random numbers).
class ScenarioSet {
 public:
  ScenarioSet() = default;
  /// Validates n >= 1, d >= 1 and finiteness of every entry.
  ScenarioSet(RowMatrix data, std::uint64_t seed, std::string model_tag);

  const RowMatrix& data() const { return data_; }
  std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data_.cols()); }
  std::uint64_t seed() const { return seed_; }
  const std::string& model_tag() const { return model_tag_; }

  /// Optional column labels (member names). Empty when unknown.
  const std::vector<std::string>& labels() const { return labels_; }
  void set_labels(std::vector<std::string> labels);

  /// Generator warnings (clipped eigenvalues, infinite-variance marginals).
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  void add_diagnostic(std::string message) { diagnostics_.push_back(std::move(message)); }

 private:
  RowMatrix data_;
  std::uint64_t seed_ = 0;
  std::string model_tag_;
  std::vector<std::string> labels_;
  std::vector<std::string> diagnostics_;
};

struct GaussianModel {
  Vector mean;
  Matrix covariance;

  std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
  /// Throws InputError unless the covariance is symmetric within 1e-12 and
  /// has no eigenvalue below -1e-10.
  void validate() const;
};

/// Factor A with A * A^T equal to the covariance after clipping eigenvalues in
/// (-1e-10, 0) to zero. Uses Cholesky when the matrix is positive definite.
struct CovarianceFactor {
  Matrix factor;
  std::vector<std::string> diagnostics;
};
CovarianceFactor factor_covariance(const Matrix& covariance);

/// Clearing-member positions: rows are members, columns are underlyings.
struct Positions {
  Matrix matrix;
  std::vector<std::string> members;
  std::vector<std::string> tickers;
};

struct StudentCopulaModel {
  Matrix correlation;   // unit diagonal, underlyings x underlyings
  double copula_dof = 6.0;
  Vector marginal_dof;  // per underlying
  Vector fudge;         // per underlying scale kappa
  Vector spot;          // per underlying S0
  Positions positions;

  std::size_t underlyings() const { return static_cast<std::size_t>(correlation.rows()); }
  std::size_t members() const { return static_cast<std::size_t>(positions.matrix.rows()); }
  void validate() const;
};

ScenarioSet simulate_gaussian(const GaussianModel& model, std::size_t n, std::uint64_t seed);

/// Student-t marginals coupled by a Student-t copula, mapped to member losses
/// X = -P (S_3d - S_0) with S_3d - S_0 = kappa * T * S_0.
ScenarioSet simulate_student_copula(const StudentCopulaModel& model, std::size_t n, std::uint64_t seed);

/// Price moves (S_3d - S_0) / (kappa * S_0) for each underlying, i.e. the
/// Student-t marginal draws, from the same stream simulate_student_copula uses.
RowMatrix simulate_copula_marginals(const StudentCopulaModel& model, std::size_t n, std::uint64_t seed);

/// Deterministic synthetic clearing book used by examples and tests: one-factor
/// correlation 0.6 between underlyings, marginal dofs spread over [4, 8],
/// kappa = 0.02, S0 = 100, integer positions in [-20, 20] with the last member
/// taking the offsetting side so that every column sums to zero.
StudentCopulaModel synthetic_book(std::size_t members, std::size_t underlyings, std::uint64_t seed,
                                  double copula_dof = 6.0);

/// Error raised for malformed positions files. Row and column are 1-based
/// file coordinates (row 1 is the header); 0 means "not applicable".
class PositionsParseError : public InputError {
 public:
  PositionsParseError(std::size_t row, std::size_t column, const std::string& what)
      : InputError(what), row_(row), column_(column) {}
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// Reads a positions CSV: header row of tickers (first cell ignored), one row
/// per member with its label in the first column. Columns must sum to zero
/// within 1e-9.
Positions load_positions(const std::filesystem::path& path);
Positions parse_positions(const std::string& csv_text);

/// Binary container: "MSRA", u16 version, u64 n, u64 d, n*d little-endian
/// doubles in row-major order, u64 seed, u32 tag length, tag bytes.
void write_scenarios(const ScenarioSet& set, const std::filesystem::path& path);
ScenarioSet read_scenarios(const std::filesystem::path& path);
std::string serialize_scenarios(const ScenarioSet& set);
ScenarioSet deserialize_scenarios(const std::string& bytes);

void write_scenarios_csv(const ScenarioSet& set, const std::filesystem::path& path);

struct ColumnSummary {
  double mean, stddev, min, max;
};
std::vector<ColumnSummary> summarize(const ScenarioSet& set);

/// Empirical quantile with linear interpolation between order statistics at
/// the 0-based position (n - 1) * level.
double empirical_quantile(std::vector<double> values, double level);

}  // namespace msra
