#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>

#include <json.hpp>

#include "msra/loss.hpp"
#include "msra/scenario.hpp"

namespace msra {

/// Output of a constraint evaluation F(m) = E[loss(X - m)].
///
/// grad and hess are derivatives with respect to the allocation m, so
/// grad = -E[grad loss(X - m)] and hess = E[hess loss(X - m)].
struct ConstraintEstimate {
  double value = 0.0;
  Vector grad;
  std::optional<Matrix> hess;
  double value_se = 0.0;
};

/// How the Hessian of losses with a discontinuous gradient is estimated.
/// `regular` keeps only the a.e. second derivative; `with_jumps` adds the
/// kernel-smoothed singular part.
enum class HessianMode { regular, with_jumps };

/// Mean of a per-scenario quantity together with its plug-in standard error.
struct Moment {
  double mean = 0.0;
  double se = 0.0;
};

/// Anything that can evaluate the constraint F(m) and its derivatives.
class ConstraintModel {
 public:
  virtual ~ConstraintModel() = default;

  virtual const LossSpec& loss() const = 0;
  std::size_t dimension() const { return loss().dimension(); }

  virtual ConstraintEstimate evaluate(const Vector& m, bool want_hessian) const = 0;
  /// False where evaluate() would reject m (surrogates have a bounded domain).
  virtual bool in_domain(const Vector& m) const {
    (void)m;
    return true;
  }

  /// Hessian model for the SQP path: the Hessian when it exists, otherwise a
  /// smoothed or differenced substitute. Absent when none is available.
  virtual std::optional<Matrix> model_hessian(const Vector& m) const { return evaluate(m, true).hess; }

  /// Per-component location and scale of X, used for starting points, search
  /// boxes and probes.
  virtual Vector location() const = 0;
  virtual Vector scale() const = 0;
  /// Per-component 80% quantile of X.
  virtual Vector upper_quantile() const = 0;

  /// Covariance of the mean of the KKT score psi = (lambda grad loss - 1, loss)
  /// at (m, lambda), i.e. Cov(psi) / n. Absent for deterministic models.
  virtual std::optional<Matrix> score_covariance(const Vector& m, double lambda) const {
    (void)m;
    (void)lambda;
    return std::nullopt;
  }

  virtual std::string kind() const = 0;
};

/// Sample-average estimator over a stored scenario set (common random numbers).
/// The scenario set must outlive the estimator.
class MonteCarloEstimator final : public ConstraintModel {
 public:
  MonteCarloEstimator(const ScenarioSet& scenarios, LossSpec loss, HessianMode mode = HessianMode::with_jumps,
                      bool cache_last = true);

  const LossSpec& loss() const override { return loss_; }
  const ScenarioSet& scenarios() const { return scenarios_; }
  HessianMode hessian_mode() const { return mode_; }
  const JumpSmoothing& jump_smoothing() const { return smoothing_; }

  ConstraintEstimate evaluate(const Vector& m, bool want_hessian) const override;
  Vector location() const override { return mean_; }
  Vector scale() const override { return stddev_; }
  Vector upper_quantile() const override { return q80_; }
  std::optional<Matrix> score_covariance(const Vector& m, double lambda) const override;
  std::optional<Matrix> model_hessian(const Vector& m) const override;
  std::string kind() const override { return "monte_carlo"; }

  /// (1/n) sum_s grad loss(X_s - m) . Y_s
  Moment gradient_dot(const Vector& m, const ScenarioSet& shock) const;
  /// (1/n) sum_s hess loss(X_s - m) Y_s, including jump terms per the mode.
  Vector hessian_times(const Vector& m, const ScenarioSet& shock) const;
  /// Systemic part h of loss = sum g(x_k) + alpha h(x): E[h(X - m)] and E[grad h(X - m)].
  std::pair<Moment, Vector> systemic_moments(const Vector& m) const;
  /// Per-scenario values loss(X_s - m).
  std::vector<double> loss_values(const Vector& m) const;

 private:
  void check_shock(const ScenarioSet& shock) const;

  const ScenarioSet& scenarios_;
  LossSpec loss_;
  HessianMode mode_;
  bool cache_last_;
  JumpSmoothing smoothing_;
  Vector mean_, stddev_, q80_;

  mutable std::mutex cache_mutex_;
  mutable std::optional<std::pair<Vector, ConstraintEstimate>> cache_;
};

/// Deterministic oracle for Gaussian X in dimension <= 3: nested 64-point
/// Gauss-Legendre rules in the Cholesky coordinates z (X = mean + L z) on [-10, 10]^d, split at
/// every kink X_k = m_k, against the standard normal density. Requires all
/// kinks of the loss on coordinate hyperplanes. Hessian terms of losses with
/// a discontinuous gradient come from central differences of the gradient.
class QuadratureOracle final : public ConstraintModel {
 public:
  QuadratureOracle(GaussianModel model, LossSpec loss);

  const LossSpec& loss() const override { return loss_; }
  const GaussianModel& model() const { return model_; }

  ConstraintEstimate evaluate(const Vector& m, bool want_hessian) const override;
  Vector location() const override { return model_.mean; }
  Vector scale() const override;
  Vector upper_quantile() const override;
  std::optional<Matrix> model_hessian(const Vector& m) const override;
  std::string kind() const override { return "quadrature"; }

  /// E[f(X)] of an arbitrary integrand whose kinks lie on the planes X_k = kink_k.
  double expectation(const std::function<double(const Vector&)>& f, const Vector& kink) const;

 private:
  void traverse(const Vector& kink, const std::function<void(const Vector&, double)>& leaf) const;
  void integrate(const Vector& m, double& value, Vector& grad, Matrix* hess) const;

  GaussianModel model_;
  LossSpec loss_;
  Matrix chol_;
};

/// Tensor-product Chebyshev interpolant on Chebyshev-Gauss-Lobatto nodes
/// x_j = cos(pi j / (N - 1)), j = 0..N-1, per axis.
class ChebyshevSurrogate {
 public:
  using Field = std::function<double(const Vector&)>;

  /// Evaluates f on all N^d tensor nodes (concurrently) and converts the
  /// samples to Chebyshev coefficients. When validation_points > 0 the error
  /// estimate is 3 times the largest gap against f at that many uniform points.
  static ChebyshevSurrogate fit(const Field& f, Vector lower, Vector upper, std::size_t nodes_per_axis,
                                std::size_t validation_points = 128, std::uint64_t seed = 7);

  std::size_t dimension() const { return static_cast<std::size_t>(lower_.size()); }
  std::size_t nodes_per_axis() const { return n_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::vector<double>& coefficients() const { return coef_; }
  double error_estimate() const { return error_; }
  bool contains(const Vector& m) const;

  /// Throws InputError outside the domain.
  double eval(const Vector& m) const;
  /// Value, gradient and Hessian of the interpolant.
  void eval_with_derivatives(const Vector& m, double& value, Vector& grad, Matrix& hess) const;

  nlohmann::json to_json() const;
  static ChebyshevSurrogate from_json(const nlohmann::json& j);

  /// Default node count per axis for a given dimension.
  static std::size_t default_nodes(std::size_t d) { return d <= 2 ? 15 : 10; }

 private:
  ChebyshevSurrogate() = default;
  void check_domain(const Vector& m) const;

  Vector lower_, upper_;
  std::size_t n_ = 0;
  std::vector<double> coef_;  // row-major over axes, axis 0 slowest
  double error_ = 0.0;
};

/// Constraint model that replaces F(m) by a Chebyshev interpolant of a base
/// model's value on a box. Gradients and Hessians are those of the
/// interpolant. The base model must outlive the surrogate.
class SurrogateConstraint final : public ConstraintModel {
 public:
  SurrogateConstraint(const ConstraintModel& base, std::size_t nodes_per_axis);
  SurrogateConstraint(const ConstraintModel& base, std::size_t nodes_per_axis, Vector lower, Vector upper);

  const LossSpec& loss() const override { return base_.loss(); }
  const ChebyshevSurrogate& surrogate() const { return surrogate_; }

  ConstraintEstimate evaluate(const Vector& m, bool want_hessian) const override;
  Vector location() const override { return base_.location(); }
  Vector scale() const override { return base_.scale(); }
  Vector upper_quantile() const override;
  bool in_domain(const Vector& m) const override { return surrogate_.contains(m); }
  std::string kind() const override { return "chebyshev"; }

  /// Default search box: location +/- max(4 scale, 0.5).
  static std::pair<Vector, Vector> default_box(const ConstraintModel& base);

 private:
  const ConstraintModel& base_;
  ChebyshevSurrogate surrogate_;
  double center_se_ = 0.0;
};

}  // namespace msra
