#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msra/common.hpp"

namespace msra {

/// One-dimensional building block h for the C1/C2/C3 families.
struct Kernel {
  enum class Type { piecewise_linear, quadratic_plus, exponential };

  Type type = Type::quadratic_plus;
  double beta = 0.0;  // slope on the negative half-line, piecewise_linear only

  static Kernel piecewise_linear(double beta) { return {Type::piecewise_linear, beta}; }
  static Kernel quadratic_plus() { return {Type::quadratic_plus, 0.0}; }
  static Kernel exponential() { return {Type::exponential, 0.0}; }

  double value(double x) const;
  /// Right derivative at kinks.
  double derivative(double x) const;
  double second_derivative(double x) const;
  bool twice_differentiable() const { return type != Type::piecewise_linear; }
  std::string name() const;
};

enum class LossFamily { quadratic_systemic, exp_bivariate, ph1, ph2, c1, c2, c3 };

/// Kernel-smoothed replacement for the Dirac terms of a Hessian whose gradient
/// jumps. Epanechnikov kernel with per-coordinate bandwidths.
struct JumpSmoothing {
  std::vector<double> bandwidth;
};

/// Witness for the risk-aversion bound: loss(x) >= scale * sum(x) - constant.
struct RiskAversionBound {
  double scale = 1.0;
  double constant = 0.0;
};

/// Immutable multivariate loss function with value, gradient and
/// (generalized) Hessian evaluation.
///
///  quadratic_systemic  [sum x_k] + 1/2 sum (x_k^+)^2 + alpha sum_{j<k} x_j^+ x_k^+ - 1
///  exp_bivariate       (e^{2x_1}/2 + e^{2x_2}/2 + alpha e^{x_1+x_2} - 1) / (1 + alpha)
///  ph1                 b sum x_k^+ - a sum x_k^-
///  ph2                 ph1 + sum_{k<j} [b (x_k+x_j)^+ - a (x_k+x_j)^-]
///  c1 / c2 / c3        h(sum x), sum h(x_k), alpha h(sum x) + beta sum h(x_k)
///
/// Subgradients at kinks use the right derivative: x^+ has derivative 1 at 0.
class LossSpec {
 public:
  static LossSpec quadratic_systemic(std::size_t d, double alpha, bool linear_term = true);
  static LossSpec exp_bivariate(double alpha);
  /// gain_weight multiplies x^-, loss_weight multiplies x^+; 0 < gain <= 1 <= loss.
  static LossSpec ph1(std::size_t d, double gain_weight, double loss_weight);
  static LossSpec ph2(std::size_t d, double gain_weight, double loss_weight);
  static LossSpec c1(std::size_t d, Kernel h);
  static LossSpec c2(std::size_t d, Kernel h);
  static LossSpec c3(std::size_t d, double alpha, double beta, Kernel h);

  LossFamily family() const { return family_; }
  std::size_t dimension() const { return d_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  bool linear_term() const { return linear_; }
  const Kernel& kernel() const { return kernel_; }
  std::string name() const;

  /// True when the Hessian is available (a.e. second derivative).
  bool twice_differentiable() const;
  /// True when the gradient itself is discontinuous, so that the distributional
  /// Hessian carries singular terms on kink sets (quadratic_systemic, alpha != 0).
  bool has_jump_terms() const;
  /// All kinks lie on coordinate hyperplanes x_k = 0.
  bool kinks_on_coordinate_planes() const;
  bool positively_homogeneous() const;
  bool permutation_invariant() const { return true; }
  RiskAversionBound risk_aversion_bound() const;

  double value(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> grad) const;
  /// Adds the a.e. Hessian at x into hess (d x d). Throws UnsupportedError for
  /// piecewise-linear families.
  void add_hessian(std::span<const double> x, Eigen::Ref<Matrix> hess) const;
  /// Adds kernel-smoothed singular Hessian terms (no-op when has_jump_terms()
  /// is false).
  void add_jump_hessian(std::span<const double> x, const JumpSmoothing& smoothing, Eigen::Ref<Matrix> hess) const;
  /// Kernel-smoothed distributional Hessian of a piecewise-linear loss,
  /// concentrated on its kink sets. Kinks along sums of coordinates use the
  /// root-sum-square of the coordinate bandwidths. No-op for smooth losses.
  void add_kink_hessian(std::span<const double> x, const JumpSmoothing& smoothing, Eigen::Ref<Matrix> hess) const;

  double eval(const Vector& x) const;
  Vector grad(const Vector& x) const;
  Matrix hess(const Vector& x) const;

  /// Decomposition loss = sum g(x_k) + alpha * h(x) used by alpha sensitivities.
  bool alpha_decomposable() const;
  double systemic_value(std::span<const double> x) const;
  void systemic_gradient(std::span<const double> x, std::span<double> grad) const;
  LossSpec with_alpha(double alpha) const;

  nlohmann::json to_json() const;
  /// Strict parser: unknown keys and out-of-range parameters are rejected.
  static LossSpec from_json(const nlohmann::json& j);

 private:
  LossSpec() = default;
  void check(std::span<const double> x) const;
  double value_sorted(std::span<const double> x) const;
  void validate_parameters() const;

  LossFamily family_ = LossFamily::quadratic_systemic;
  std::size_t d_ = 0;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  double gain_ = 0.0;
  double loss_ = 1.0;
  bool linear_ = true;
  Kernel kernel_;
};

struct LossValidationReport {
  bool monotone = true;
  bool convex = true;            // sampled convex-combination checks
  bool negative_infimum = false;  // loss < 0 somewhere far in the negative orthant
  bool risk_averse = true;        // bound from risk_aversion_bound() holds on samples
  bool permutation_invariant = true;
  bool positively_homogeneous = false;  // checked only when declared
  bool homogeneity_checked = false;
  /// Zero-sum direction along which the loss does not grow was found; the
  /// risk allocation may then be non-unique.
  bool recession_direction_found = false;
  double min_recession_slope = 0.0;
  std::vector<double> recession_direction;
  std::vector<std::string> notes;

  bool passed() const {
    return monotone && convex && negative_infimum && risk_averse && permutation_invariant &&
           (!homogeneity_checked || positively_homogeneous);
  }
  nlohmann::json to_json() const;
};

/// Randomized checks of monotonicity, convexity, negative infimum, the
/// risk-aversion bound, permutation invariance, homogeneity and a
/// zero-sum recession probe: r -> [l(x + r u) - l(x)] / r at r = 1e6 along
/// sampled zero-sum unit directions u. A slope below 1e-6 counts as a
/// direction of recession. Advisory only.
LossValidationReport validate_loss(const LossSpec& spec, std::size_t sample_count = 2000, std::uint64_t seed = 1);

}  // namespace msra
