#include "msra/sensitivity.hpp"

#include <cmath>

#include "msra/parallel.hpp"
#include "msra/random.hpp"

namespace msra {
namespace {

constexpr double kMaxCondition = 1e12;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  return smallest > 0.0 ? s(0) / smallest : std::numeric_limits<double>::infinity();
}

Matrix saddle_matrix(const Matrix& h, double lambda) {
  const auto d = h.rows();
  Matrix m = Matrix::Zero(d + 1, d + 1);
  m.topLeftCorner(d, d) = lambda * h;
  m.topRightCorner(d, 1).setConstant(-1.0 / lambda);
  m.bottomLeftCorner(1, d).setOnes();
  return m;
}

void require_solution(const MonteCarloEstimator& est, const AllocationResult& alloc) {
  if (static_cast<std::size_t>(alloc.m_star.size()) != est.dimension())
    throw InputError("allocation and estimator dimensions differ");
  if (!(alloc.lambda_star > 0.0)) throw InputError("sensitivities need a positive multiplier lambda*");
}

}  // namespace

std::string to_string(SensitivityMethod method) {
  switch (method) {
    case SensitivityMethod::linear_system: return "linear_system";
    case SensitivityMethod::finite_difference: return "finite_difference";
    case SensitivityMethod::closed_form: return "closed_form";
  }
  return "?";
}

nlohmann::json SensitivityResult::to_json() const {
  nlohmann::json j = {{"marginal_risk", marginal_risk},
                      {"marginal_alloc", to_std(marginal_alloc)},
                      {"lambda_dot", lambda_dot},
                      {"method", to_string(method)},
                      {"marginal_risk_se", marginal_risk_se}};
  if (method == SensitivityMethod::linear_system) j["condition"] = condition;
  return j;
}

nlohmann::json AlphaSensitivity::to_json() const {
  return {{"d_risk", d_risk},
          {"d_alloc", to_std(d_alloc)},
          {"d_lambda", d_lambda},
          {"d_risk_se", d_risk_se},
          {"condition", condition}};
}

Moment marginal_risk(const MonteCarloEstimator& est, const AllocationResult& alloc, const ScenarioSet& shock) {
  require_solution(est, alloc);
  const Moment dot = est.gradient_dot(alloc.m_star, shock);
  return {alloc.lambda_star * dot.mean, alloc.lambda_star * dot.se};
}

SaddleSystem saddle_system(const MonteCarloEstimator& est, const AllocationResult& alloc, const ScenarioSet& shock) {
  require_solution(est, alloc);
  const ConstraintEstimate e = est.evaluate(alloc.m_star, true);
  if (!e.hess)
    throw UnsupportedError("loss " + est.loss().name() +
                           " has no Hessian; use finite_difference_sensitivity through the solver");
  const double lambda = alloc.lambda_star;
  const auto d = static_cast<Eigen::Index>(est.dimension());
  const Moment risk = marginal_risk(est, alloc, shock);
  SaddleSystem s;
  s.M = saddle_matrix(*e.hess, lambda);
  s.V.resize(d + 1);
  s.V.head(d) = lambda * est.hessian_times(alloc.m_star, shock);
  s.V(d) = risk.mean;
  s.condition = condition_number(s.M);
  s.marginal_risk_se = risk.se;
  return s;
}

SensitivityResult marginal_allocation(const SaddleSystem& system) {
  if (!(system.condition < kMaxCondition))
    throw NumericError("saddle matrix M is numerically singular (condition " + std::to_string(system.condition) +
                       "); use the finite-difference method instead");
  const auto d = system.M.rows() - 1;
  const Vector z = system.M.partialPivLu().solve(system.V);
  SensitivityResult r;
  r.marginal_alloc = z.head(d);
  r.lambda_dot = z(d);
  r.marginal_risk = system.V(d);
  r.marginal_risk_se = system.marginal_risk_se;
  r.condition = system.condition;
  r.method = SensitivityMethod::linear_system;
  return r;
}

SensitivityResult shock_sensitivity(const MonteCarloEstimator& est, const AllocationResult& alloc,
                                    const ScenarioSet& shock) {
  return marginal_allocation(saddle_system(est, alloc, shock));
}

ScenarioSet shifted_scenarios(const ScenarioSet& scenarios, const ScenarioSet& shock, double t) {
  if (shock.rows() != scenarios.rows() || shock.cols() != scenarios.cols())
    throw InputError("shock scenarios are not aligned with the loss scenarios");
  ScenarioSet out(RowMatrix(scenarios.data() + t * shock.data()), scenarios.seed(),
                  scenarios.model_tag() + "+shift");
  out.set_labels(scenarios.labels());
  return out;
}

ScenarioSet independent_normal_shock(std::size_t rows, std::size_t cols, std::size_t component, double mean,
                                     double sd, std::uint64_t seed) {
  require(component < cols, "shock component out of range");
  require(sd >= 0.0, "shock standard deviation must be >= 0");
  RowMatrix y = RowMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::size_t blocks = (rows + parallel::kBlockRows - 1) / parallel::kBlockRows;
  parallel::for_blocks(blocks, [&](std::size_t b) {
    CounterRng rng(seed, 0x5A0C0000ULL + b);
    const std::size_t end = std::min(rows, (b + 1) * parallel::kBlockRows);
    for (std::size_t s = b * parallel::kBlockRows; s < end; ++s)
      y(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(component)) = mean + sd * rng.normal();
  });
  return ScenarioSet(std::move(y), seed, "normal_shock");
}

SensitivityResult finite_difference_sensitivity(const ScenarioSet& scenarios, const ScenarioSet& shock,
                                                const LossSpec& loss, double t, const SolverOptions& options) {
  require(t > 0.0, "finite-difference step must be positive");
  const ScenarioSet up = shifted_scenarios(scenarios, shock, t);
  const ScenarioSet down = shifted_scenarios(scenarios, shock, -t);
  SolverOptions opts = options;
  opts.allocation_errors = false;
  const MonteCarloEstimator base_est(scenarios, loss);
  const AllocationResult base = solve_allocation(base_est, opts);
  opts.init = base.m_star;
  const AllocationResult a = solve_allocation(MonteCarloEstimator(up, loss), opts);
  const AllocationResult b = solve_allocation(MonteCarloEstimator(down, loss), opts);
  SensitivityResult r;
  r.marginal_alloc = (a.m_star - b.m_star) / (2.0 * t);
  r.marginal_risk = (a.risk - b.risk) / (2.0 * t);
  r.lambda_dot = (a.lambda_star - b.lambda_star) / (2.0 * t);
  r.method = SensitivityMethod::finite_difference;
  return r;
}

double src_closed_form(double rho, double sigma1, double sigma2, double alpha) {
  require(alpha >= 0.0, "alpha must be >= 0");
  require(std::abs(rho) <= 1.0, "correlation must lie in [-1, 1]");
  require(sigma1 >= 0.0 && sigma2 >= 0.0, "volatilities must be >= 0");
  return std::log1p(alpha * std::exp(rho * sigma1 * sigma2 - 0.5 * (sigma1 * sigma1 + sigma2 * sigma2)));
}

ExpBivariateClosedForm exp_bivariate_closed_form(double rho, double sigma1, double sigma2, double alpha) {
  const double src = src_closed_form(rho, sigma1, sigma2, alpha);
  Vector a(2);
  a << sigma1 * sigma1 + 0.5 * src, sigma2 * sigma2 + 0.5 * src;
  return {src, a, a.sum()};
}

SensitivityResult exogenous_shock_closed_form(const ScenarioSet& scenarios, const ScenarioSet& shock, double alpha,
                                              double m, double marginal_risk_value) {
  require(scenarios.cols() == 2 && shock.cols() == 2, "the exogenous-shock closed form is bivariate");
  require(shock.rows() == scenarios.rows(), "shock scenarios are not aligned with the loss scenarios");
  const auto sums = parallel::block_sum(scenarios.rows(), 4, [&](std::size_t begin, std::size_t end,
                                                                 std::span<double> acc) {
    for (std::size_t s = begin; s < end; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const bool first = scenarios.data()(si, 0) >= m;
      const bool both = first && scenarios.data()(si, 1) >= m;
      const double y = shock.data()(si, 0);
      acc[0] += first ? 1.0 : 0.0;
      acc[1] += both ? 1.0 : 0.0;
      acc[2] += first ? y : 0.0;
      acc[3] += both ? y : 0.0;
    }
  });
  const double n = static_cast<double>(scenarios.rows());
  const double p = sums[0] / n, r = sums[1] / n;
  const double correction = 0.5 * (sums[2] / n - alpha * sums[3] / n) / (p - alpha * r);
  SensitivityResult out;
  out.marginal_risk = marginal_risk_value;
  out.marginal_alloc.resize(2);
  out.marginal_alloc << 0.5 * marginal_risk_value + correction, 0.5 * marginal_risk_value - correction;
  out.method = SensitivityMethod::closed_form;
  return out;
}

AlphaSensitivity alpha_sensitivity(const MonteCarloEstimator& est, const AllocationResult& alloc) {
  require_solution(est, alloc);
  if (!est.loss().alpha_decomposable())
    throw UnsupportedError("alpha sensitivity needs a loss of the form sum g(x_k) + alpha h(x) with smooth g; " +
                           est.loss().name() + " is not");
  const ConstraintEstimate e = est.evaluate(alloc.m_star, true);
  if (!e.hess) throw UnsupportedError("alpha sensitivity needs a twice-differentiable loss");
  const double lambda = alloc.lambda_star;
  const auto d = static_cast<Eigen::Index>(est.dimension());
  const auto [h, grad_h] = est.systemic_moments(alloc.m_star);
  AlphaSensitivity out;
  out.d_risk = lambda * h.mean;
  out.d_risk_se = lambda * h.se;
  const Matrix m = saddle_matrix(*e.hess, lambda);
  out.condition = condition_number(m);
  if (!(out.condition < kMaxCondition))
    throw NumericError("saddle matrix M is numerically singular (condition " + std::to_string(out.condition) +
                       "); use alpha_finite_difference instead");
  Vector v(d + 1);
  v.head(d) = lambda * grad_h;
  v(d) = out.d_risk;
  const Vector z = m.partialPivLu().solve(v);
  out.d_alloc = z.head(d);
  out.d_lambda = z(d);
  return out;
}

AlphaSensitivity alpha_finite_difference(const ScenarioSet& scenarios, const LossSpec& loss, double step,
                                         const SolverOptions& options) {
  require(step > 0.0, "finite-difference step must be positive");
  SolverOptions opts = options;
  opts.allocation_errors = false;
  const double alpha = loss.alpha();
  const bool central = alpha - step >= 0.0;
  const LossSpec up = loss.with_alpha(alpha + step);
  const LossSpec down = central ? loss.with_alpha(alpha - step) : loss;
  const AllocationResult a = solve_allocation(MonteCarloEstimator(scenarios, up), opts);
  opts.init = a.m_star;
  const AllocationResult b = solve_allocation(MonteCarloEstimator(scenarios, down), opts);
  const double width = central ? 2.0 * step : step;
  AlphaSensitivity out;
  out.d_alloc = (a.m_star - b.m_star) / width;
  out.d_risk = (a.risk - b.risk) / width;
  out.d_lambda = (a.lambda_star - b.lambda_star) / width;
  return out;
}

}  // namespace msra
