#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "msra/sensitivity.hpp"

using namespace msra;
using msra::test::bivariate;
using msra::test::trivariate;

namespace {

ScenarioSet first_column_only(const ScenarioSet& x) {
  RowMatrix y = RowMatrix::Zero(x.data().rows(), x.data().cols());
  y.col(0) = x.data().col(0);
  return msra::test::from_rows(std::move(y));
}

GaussianModel iid3() { return GaussianModel{Vector::Zero(3), Matrix::Identity(3, 3)}; }

GaussianModel alpha_model(double rho) {
  GaussianModel g{Vector::Zero(3), Matrix::Identity(3, 3)};
  g.covariance(0, 1) = g.covariance(1, 0) = rho;
  return g;
}

}  // namespace

TEST_CASE("zero shock has zero sensitivity") {
  const ScenarioSet x = simulate_gaussian(bivariate(0.5), 100000, 1);
  const MonteCarloEstimator est(x, LossSpec::quadratic_systemic(2, 1.0));
  const auto alloc = solve_allocation(est);
  const ScenarioSet zero = msra::test::from_rows(RowMatrix::Zero(x.data().rows(), 2));
  const auto s = shock_sensitivity(est, alloc, zero);
  CHECK(s.marginal_risk == 0.0);
  CHECK(s.marginal_alloc.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.lambda_dot == 0.0);
  CHECK(marginal_risk(est, alloc, zero).mean == 0.0);
}

TEST_CASE("independent shock moves the allocation by its mean") {
  const std::size_t n = 2'000'000;
  const ScenarioSet x = simulate_gaussian(bivariate(0.5), n, 42);
  const MonteCarloEstimator est(x, LossSpec::quadratic_systemic(2, 1.0));
  const auto alloc = solve_allocation(est);
  const ScenarioSet y = independent_normal_shock(n, 2, 0, 0.1, 0.05, 7);
  const auto s = shock_sensitivity(est, alloc, y);
  CHECK(std::abs(s.marginal_risk - 0.1) <= 3.0 * s.marginal_risk_se);
  CHECK(std::abs(s.marginal_alloc(0) - 0.1) <= 3.0 * s.marginal_risk_se);
  CHECK(std::abs(s.marginal_alloc(1)) <= 3.0 * s.marginal_risk_se);
  CHECK(s.marginal_alloc.sum() == doctest::Approx(s.marginal_risk).epsilon(1e-10));
  CHECK(s.condition > 0.0);
}

TEST_CASE("sensitivities sum to the marginal risk") {
  const ScenarioSet x = simulate_gaussian(trivariate(0.5), 200000, 2);
  const MonteCarloEstimator est(x, LossSpec::quadratic_systemic(3, 1.0));
  const auto alloc = solve_allocation(est);
  const auto s = shock_sensitivity(est, alloc, x);
  CHECK(s.marginal_alloc.sum() == doctest::Approx(s.marginal_risk).epsilon(1e-10));
}

TEST_CASE("exogenous shock closed form in the symmetric bivariate model") {
  const double alpha = 1.0;
  const ScenarioSet x = simulate_gaussian(bivariate(0.5), 400000, 3);
  const LossSpec l = LossSpec::quadratic_systemic(2, alpha, false);
  const MonteCarloEstimator est(x, l, HessianMode::regular);
  const auto alloc = solve_allocation(est, SolverOptions{.tol = 1e-5});
  const ScenarioSet y = first_column_only(x);
  const auto linear = shock_sensitivity(est, alloc, y);
  const auto closed = exogenous_shock_closed_form(x, y, alpha, alloc.m_star.mean(), linear.marginal_risk);
  INFO("linear " << linear.marginal_alloc.transpose() << " closed " << closed.marginal_alloc.transpose());
  CHECK((linear.marginal_alloc - closed.marginal_alloc).cwiseAbs().maxCoeff() <= 5e-3);
  CHECK(linear.marginal_alloc(0) > linear.marginal_alloc(1));
}

TEST_CASE("systemic risk contribution closed form") {
  for (double rho : {-0.9, 0.0, 0.9})
    for (double s : {0.5, 1.0, 2.0}) CHECK(src_closed_form(rho, s, 1.0, 0.0) == 0.0);
  CHECK(src_closed_form(0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.31326168751822286).epsilon(1e-14));
  for (double rho = -0.9; rho < 0.9; rho += 0.05)
    CHECK(src_closed_form(rho + 0.05, 0.7, 1.2, 1.0) > src_closed_form(rho, 0.7, 1.2, 1.0));
  const auto cf = exp_bivariate_closed_form(0.5, 0.5, 1.0, 1.0);
  CHECK(cf.allocation(0) == doctest::Approx(0.25 + 0.5 * cf.src));
  CHECK(cf.risk == doctest::Approx(1.25 + cf.src));
  CHECK_THROWS_AS(src_closed_form(1.5, 1.0, 1.0, 1.0), InputError);
}

TEST_CASE("linear system agrees with finite differences") {
  const ScenarioSet x = simulate_gaussian(bivariate(0.2), 400000, 4);
  const LossSpec l = LossSpec::quadratic_systemic(2, 1.0);
  const MonteCarloEstimator est(x, l);
  const SolverOptions opts{.tol = 1e-5};
  const auto alloc = solve_allocation(est, opts);
  const auto linear = shock_sensitivity(est, alloc, x);
  const auto fd = finite_difference_sensitivity(x, x, l, 1e-3, opts);
  const double bound = std::max(1e-3, 5.0 * alloc.risk_se);
  INFO("linear " << linear.marginal_alloc.transpose() << " fd " << fd.marginal_alloc.transpose());
  CHECK((linear.marginal_alloc - fd.marginal_alloc).cwiseAbs().maxCoeff() <= bound);
  CHECK(std::abs(linear.marginal_risk - fd.marginal_risk) <= bound);
}

TEST_CASE("scaling shock equals the risk for homogeneous problems") {
  const ScenarioSet x = simulate_gaussian(trivariate(0.2), 200000, 5);
  const LossSpec l = LossSpec::c2(3, Kernel::quadratic_plus());
  const MonteCarloEstimator est(x, l);
  const auto alloc = solve_allocation(est, SolverOptions{.tol = 1e-9});
  const auto fd = finite_difference_sensitivity(x, x, l, 1e-4, SolverOptions{.tol = 1e-10});
  const auto fd2 = finite_difference_sensitivity(x, x, l, 2e-4, SolverOptions{.tol = 1e-10});
  const Vector richardson = (4.0 * fd.marginal_alloc - fd2.marginal_alloc) / 3.0;
  const auto linear = shock_sensitivity(est, alloc, x);
  CHECK((linear.marginal_alloc - richardson).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("singular saddle matrix is reported") {
  SaddleSystem s;
  s.M = Matrix::Zero(3, 3);
  s.V = Vector::Ones(3);
  s.condition = 1e20;
  CHECK_THROWS_AS(marginal_allocation(s), NumericError);
}

TEST_CASE("piecewise-linear losses have no linear-system sensitivity") {
  const ScenarioSet x = simulate_gaussian(bivariate(0.2), 20000, 6);
  const MonteCarloEstimator est(x, LossSpec::ph1(2, 0.5, 1.0));
  const auto alloc = solve_allocation(est);
  CHECK_THROWS_AS(shock_sensitivity(est, alloc, x), UnsupportedError);
  const double slack = alloc.kkt_residual * (alloc.m_star.cwiseAbs().sum() + alloc.lambda_star);
  CHECK(std::abs(marginal_risk(est, alloc, x).mean - alloc.risk) <= slack + 1e-12);
}

TEST_CASE("misaligned shock is rejected") {
  const ScenarioSet x = simulate_gaussian(bivariate(0.2), 1000, 6);
  const MonteCarloEstimator est(x, LossSpec::quadratic_systemic(2, 1.0));
  const auto alloc = solve_allocation(est);
  const ScenarioSet y = simulate_gaussian(bivariate(0.2), 999, 6);
  CHECK_THROWS_AS(shock_sensitivity(est, alloc, y), InputError);
  CHECK_THROWS_AS(independent_normal_shock(10, 2, 2, 0.0, 1.0, 1), InputError);
}

TEST_CASE("alpha sensitivity on exchangeable components") {
  const ScenarioSet x = simulate_gaussian(iid3(), 500000, 7);
  const LossSpec l = LossSpec::quadratic_systemic(3, 0.5, false);
  const MonteCarloEstimator est(x, l);
  const auto alloc = solve_allocation(est, SolverOptions{.tol = 1e-5});
  const auto a = alpha_sensitivity(est, alloc);
  CHECK(a.d_alloc.sum() == doctest::Approx(a.d_risk).epsilon(1e-10));
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(a.d_alloc(k) - a.d_risk / 3.0) <= 0.01);
  CHECK(a.d_risk > 0.0);
}

TEST_CASE("alpha sensitivity favours correlated components") {
  const LossSpec l = LossSpec::quadratic_systemic(3, 0.5, false);
  const ScenarioSet hi = simulate_gaussian(alpha_model(0.9), 500000, 8);
  const MonteCarloEstimator est_hi(hi, l);
  const auto a_hi = alpha_sensitivity(est_hi, solve_allocation(est_hi, SolverOptions{.tol = 1e-5}));
  CHECK(a_hi.d_alloc(0) > a_hi.d_alloc(2));
  CHECK(a_hi.d_alloc(1) > a_hi.d_alloc(2));
  const ScenarioSet lo = simulate_gaussian(alpha_model(-0.9), 500000, 8);
  const MonteCarloEstimator est_lo(lo, l);
  const auto a_lo = alpha_sensitivity(est_lo, solve_allocation(est_lo, SolverOptions{.tol = 1e-5}));
  CHECK(a_lo.d_alloc(2) > a_lo.d_alloc(0));
  CHECK(a_hi.d_risk > a_lo.d_risk);
}

TEST_CASE("alpha sensitivity agrees with finite differences") {
  const ScenarioSet x = simulate_gaussian(alpha_model(0.5), 300000, 9);
  const LossSpec l = LossSpec::quadratic_systemic(3, 0.5, false);
  const SolverOptions opts{.tol = 1e-5};
  const MonteCarloEstimator est(x, l);
  const auto a = alpha_sensitivity(est, solve_allocation(est, opts));
  const auto fd = alpha_finite_difference(x, l, 1e-2, opts);
  INFO("linear " << a.d_alloc.transpose() << " fd " << fd.d_alloc.transpose());
  CHECK(std::abs(a.d_risk - fd.d_risk) <= std::max(1e-3, 5.0 * a.d_risk_se));
  CHECK((a.d_alloc - fd.d_alloc).cwiseAbs().maxCoeff() <= std::max(1e-3, 5.0 * a.d_risk_se));
  CHECK_THROWS_AS(alpha_sensitivity(MonteCarloEstimator(x, LossSpec::ph2(3, 0.5, 1.0)),
                                    solve_allocation(MonteCarloEstimator(x, LossSpec::ph2(3, 0.5, 1.0)))),
                  UnsupportedError);
}

TEST_CASE("marginal risk matches the extrapolated difference quotient") {
  const ScenarioSet x = simulate_gaussian(bivariate(0.2), 400000, 12);
  const LossSpec l = LossSpec::quadratic_systemic(2, 1.0);
  SolverOptions opts;
  opts.tol = 1e-6;
  opts.allocation_errors = false;
  const MonteCarloEstimator est(x, l);
  const auto alloc = solve_allocation(est, opts);
  opts.init = alloc.m_star;
  auto quotient = [&](double t) {
    const ScenarioSet moved = shifted_scenarios(x, x, t);
    return (solve_allocation(MonteCarloEstimator(moved, l), opts).risk - alloc.risk) / t;
  };
  const double richardson = (10.0 * quotient(1e-3) - quotient(1e-2)) / 9.0;
  const Moment mr = marginal_risk(est, alloc, x);
  INFO("marginal " << mr.mean << " richardson " << richardson << " se " << mr.se);
  CHECK(std::abs(mr.mean - richardson) <= std::max(1e-3, 5.0 * mr.se));
}
