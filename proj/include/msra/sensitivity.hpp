#pragma once

#include <json.hpp>

#include "msra/solver.hpp"

namespace msra {

enum class SensitivityMethod { linear_system, finite_difference, closed_form };
std::string to_string(SensitivityMethod method);

/// Directional derivatives of R, RA and lambda in the direction of a shock Y.
struct SensitivityResult {
  double marginal_risk = 0.0;  // R(X;Y)
  Vector marginal_alloc;       // RA(X;Y)
  double lambda_dot = 0.0;     // lambda(X;Y)
  SensitivityMethod method = SensitivityMethod::linear_system;
  double marginal_risk_se = 0.0;
  double condition = 0.0;  // of M, linear_system only

  nlohmann::json to_json() const;
};

/// Linearized first-order system M z = V with
///   M = [[lambda H, -(1/lambda) 1], [1', 0]],  V = [lambda E[hess loss(X - m) Y]; R(X;Y)],
/// H = E[hess loss(X - m)].
struct SaddleSystem {
  Matrix M;
  Vector V;
  double condition = 0.0;  // 2-norm condition number of M
  double marginal_risk_se = 0.0;
};

/// lambda* (1/n) sum_s grad loss(X_s - m*) . Y_s, with its standard error.
Moment marginal_risk(const MonteCarloEstimator& est, const AllocationResult& alloc, const ScenarioSet& shock);

SaddleSystem saddle_system(const MonteCarloEstimator& est, const AllocationResult& alloc, const ScenarioSet& shock);

/// Solves M z = V. Throws NumericError when the condition number exceeds 1e12.
SensitivityResult marginal_allocation(const SaddleSystem& system);

/// saddle_system followed by marginal_allocation.
SensitivityResult shock_sensitivity(const MonteCarloEstimator& est, const AllocationResult& alloc,
                                    const ScenarioSet& shock);

/// Central differences (RA(X + tY) - RA(X - tY)) / 2t of the solver on shifted
/// copies of the same scenario rows.
SensitivityResult finite_difference_sensitivity(const ScenarioSet& scenarios, const ScenarioSet& shock,
                                                const LossSpec& loss, double t = 1e-3,
                                                const SolverOptions& options = {});

/// X + t Y row by row.
ScenarioSet shifted_scenarios(const ScenarioSet& scenarios, const ScenarioSet& shock, double t);

/// Shock that is zero except for one column holding i.i.d. N(mean, sd^2) draws.
ScenarioSet independent_normal_shock(std::size_t rows, std::size_t cols, std::size_t component, double mean,
                                     double sd, std::uint64_t seed);

/// SRC = ln(1 + alpha exp(rho s1 s2 - (s1^2 + s2^2) / 2)).
double src_closed_form(double rho, double sigma1, double sigma2, double alpha);

/// Allocation of the exponential bivariate loss for centred Gaussian X:
/// RA_i = s_i^2 + SRC / 2 and R = s1^2 + s2^2 + SRC.
struct ExpBivariateClosedForm {
  double src;
  Vector allocation;
  double risk;
};
ExpBivariateClosedForm exp_bivariate_closed_form(double rho, double sigma1, double sigma2, double alpha);

/// Closed-form split of R(X;Y) for the exchangeable bivariate quadratic model
/// with loss (x1^+)^2/2 + (x2^+)^2/2 + alpha x1^+ x2^+ - 1 and shock Y = (Y1, 0),
/// with p, r and the shock moments estimated on the scenario rows at m = m_1:
///   RA_{1,2} = R/2 +- (E[Y1 1{X1>=m}] - alpha E[Y1 1{X1>=m, X2>=m}]) / (2 (p - alpha r)).
SensitivityResult exogenous_shock_closed_form(const ScenarioSet& scenarios, const ScenarioSet& shock, double alpha,
                                              double m, double marginal_risk);

/// Derivatives with respect to the systemic weight of loss = sum g(x_k) + alpha h(x).
struct AlphaSensitivity {
  double d_risk = 0.0;  // lambda E[h(X - m)]
  Vector d_alloc;
  double d_lambda = 0.0;
  double d_risk_se = 0.0;
  double condition = 0.0;

  nlohmann::json to_json() const;
};

AlphaSensitivity alpha_sensitivity(const MonteCarloEstimator& est, const AllocationResult& alloc);

/// Central differences of the solver in alpha, on the same scenario rows.
AlphaSensitivity alpha_finite_difference(const ScenarioSet& scenarios, const LossSpec& loss, double step = 1e-3,
                                         const SolverOptions& options = {});

}  // namespace msra
