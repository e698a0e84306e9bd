#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msra/estimators.hpp"

namespace msra {

enum class SolverMethod { automatic, kkt, sqp };
enum class Uniqueness { unique, suspect_nonunique };

std::string to_string(SolverMethod method);
SolverMethod parse_solver_method(const std::string& name);

struct SolverOptions {
  SolverMethod method = SolverMethod::automatic;
  std::optional<Vector> init;
  /// Defaults to max(1e-8, 0.1 * standard error of the constraint at the start).
  std::optional<double> tol;
  std::size_t max_iterations = 200;
  /// Imposes m >= 0. Only the SQP path supports it.
  bool nonnegative = false;
  /// When false, a loss with a detected zero-sum direction of recession is rejected.
  bool accept_nonunique = true;
  /// Sandwich standard errors of the allocation (Monte Carlo models only).
  bool allocation_errors = true;
};

struct AllocationResult {
  Vector m_star;
  double lambda_star = 0.0;
  double risk = 0.0;
  double kkt_residual = 0.0;
  double constraint_value = 0.0;
  std::size_t iterations = 0;
  double mc_standard_error = 0.0;  // of the constraint value at m_star
  Vector allocation_se;            // per component, empty when unavailable
  double risk_se = 0.0;
  Uniqueness uniqueness = Uniqueness::unique;
  std::string method;
  double tolerance = 0.0;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

/// Raised when the iteration budget is exhausted or no descent is possible.
/// Carries the last iterate.
class SolverError : public NumericError {
 public:
  SolverError(const std::string& what, Vector m, double lambda, double residual, std::size_t iterations)
      : NumericError(what), m_(std::move(m)), lambda_(lambda), residual_(residual), iterations_(iterations) {}
  const Vector& last_m() const { return m_; }
  double last_lambda() const { return lambda_; }
  double last_residual() const { return residual_; }
  std::size_t iterations() const { return iterations_; }
  nlohmann::json to_json() const;

 private:
  Vector m_;
  double lambda_;
  double residual_;
  std::size_t iterations_;
};

/// (lambda E[grad loss(X - m)] - 1, E[loss(X - m)]) stacked into a vector of size d + 1.
Vector kkt_residual(const ConstraintModel& model, const Vector& m, double lambda);

/// Minimizes sum(m) subject to E[loss(X - m)] <= 0.
///
/// Smooth losses use damped Newton on the first-order system in (m, lambda)
/// with a backtracking line search on half the squared residual norm, and fall
/// back to SQP when Newton stalls. Piecewise-linear losses and the m >= 0
/// variant go straight to SQP: equality-constrained QP steps with a Hessian
/// model (exact, kernel-smoothed or damped BFGS) plus 1e-10 * I, an l1 merit
/// function and an active set for the bounds.
AllocationResult solve_allocation(const ConstraintModel& model, const SolverOptions& options = {});

double risk_measure(const ConstraintModel& model, const SolverOptions& options = {});

}  // namespace msra
