#include "msra/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "msra/parallel.hpp"
#include "msra/random.hpp"

namespace msra {
namespace {

constexpr double kQuadratureRadius = 10.0;
constexpr double kUpperQuantileZ = 0.8416212335729143;  // standard normal 80% quantile

std::span<const double> row_span(const RowMatrix& data, std::size_t s) {
  return {data.data() + s * static_cast<std::size_t>(data.cols()), static_cast<std::size_t>(data.cols())};
}

double standard_error(double sum, double sum_sq, std::size_t n) {
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
  return std::sqrt(var / static_cast<double>(n));
}

void check_allocation(const Vector& m, std::size_t d) {
  if (static_cast<std::size_t>(m.size()) != d)
    throw InputError("allocation has size " + std::to_string(m.size()) + ", expected " + std::to_string(d));
}

}  // namespace

// ---------------------------------------------------------------------------
// Monte Carlo

MonteCarloEstimator::MonteCarloEstimator(const ScenarioSet& scenarios, LossSpec loss, HessianMode mode,
                                         bool cache_last)
    : scenarios_(scenarios), loss_(std::move(loss)), mode_(mode), cache_last_(cache_last) {
  if (scenarios_.rows() == 0 || scenarios_.cols() == 0) throw InputError("scenario set is empty");
  if (scenarios_.cols() != loss_.dimension())
    throw InputError("scenario set has " + std::to_string(scenarios_.cols()) + " columns but the loss has dimension " +
                     std::to_string(loss_.dimension()));
  const std::size_t d = scenarios_.cols();
  const auto summary = summarize(scenarios_);
  mean_.resize(static_cast<Eigen::Index>(d));
  stddev_.resize(static_cast<Eigen::Index>(d));
  q80_.resize(static_cast<Eigen::Index>(d));
  smoothing_.bandwidth.assign(d, 0.0);
  const double n = static_cast<double>(scenarios_.rows());
  for (std::size_t k = 0; k < d; ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    mean_(ki) = summary[k].mean;
    stddev_(ki) = summary[k].stddev;
    const Vector column = scenarios_.data().col(ki);
    q80_(ki) = empirical_quantile(std::vector<double>(column.data(), column.data() + column.size()), 0.8);
    smoothing_.bandwidth[k] = 2.34 * summary[k].stddev * std::pow(n, -0.2);
  }
}

ConstraintEstimate MonteCarloEstimator::evaluate(const Vector& m, bool want_hessian) const {
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  want_hessian = want_hessian && loss_.twice_differentiable();
  if (cache_last_) {
    std::lock_guard lock(cache_mutex_);
    if (cache_ && cache_->first.size() == m.size() && cache_->first == m &&
        (!want_hessian || cache_->second.hess.has_value()))
      return cache_->second;
  }

  const bool jumps = want_hessian && mode_ == HessianMode::with_jumps && loss_.has_jump_terms();
  const std::size_t width = 2 + d + (want_hessian ? d * d : 0);
  const RowMatrix& data = scenarios_.data();
  const auto sums = parallel::block_sum(scenarios_.rows(), width, [&](std::size_t begin, std::size_t end,
                                                                      std::span<double> acc) {
    std::vector<double> x(d), g(d);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      const double v = loss_.value(x);
      acc[0] += v;
      acc[1] += v * v;
      loss_.gradient(x, g);
      for (std::size_t k = 0; k < d; ++k) acc[2 + k] += g[k];
      if (want_hessian) {
        Eigen::Map<Matrix> h(acc.data() + 2 + d, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        loss_.add_hessian(x, h);
        if (jumps) loss_.add_jump_hessian(x, smoothing_, h);
      }
    }
  });

  const std::size_t n = scenarios_.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  ConstraintEstimate out;
  out.value = sums[0] * inv_n;
  out.value_se = standard_error(sums[0], sums[1], n);
  out.grad.resize(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) out.grad(static_cast<Eigen::Index>(k)) = -sums[2 + k] * inv_n;
  if (want_hessian) {
    Matrix h = Eigen::Map<const Matrix>(sums.data() + 2 + d, static_cast<Eigen::Index>(d),
                                        static_cast<Eigen::Index>(d)) * inv_n;
    out.hess = 0.5 * (h + h.transpose());
  }
  if (cache_last_) {
    std::lock_guard lock(cache_mutex_);
    cache_ = std::make_pair(m, out);
  }
  return out;
}

std::optional<Matrix> MonteCarloEstimator::score_covariance(const Vector& m, double lambda) const {
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  const std::size_t p = d + 1;
  const RowMatrix& data = scenarios_.data();
  const auto sums = parallel::block_sum(scenarios_.rows(), p + p * p, [&](std::size_t begin, std::size_t end,
                                                                         std::span<double> acc) {
    std::vector<double> x(d), g(d), psi(p);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      loss_.gradient(x, g);
      for (std::size_t k = 0; k < d; ++k) psi[k] = lambda * g[k] - 1.0;
      psi[d] = loss_.value(x);
      for (std::size_t i = 0; i < p; ++i) {
        acc[i] += psi[i];
        for (std::size_t j = 0; j < p; ++j) acc[p + i * p + j] += psi[i] * psi[j];
      }
    }
  });
  const double n = static_cast<double>(scenarios_.rows());
  const auto pi = static_cast<Eigen::Index>(p);
  Vector mean = Eigen::Map<const Vector>(sums.data(), pi) / n;
  Matrix second = Eigen::Map<const Matrix>(sums.data() + p, pi, pi) / n;
  Matrix cov = second - mean * mean.transpose();
  if (n > 1) cov *= n / (n - 1.0);
  return cov / n;
}

std::optional<Matrix> MonteCarloEstimator::model_hessian(const Vector& m) const {
  if (loss_.twice_differentiable()) return evaluate(m, true).hess;
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  const auto di = static_cast<Eigen::Index>(d);
  const RowMatrix& data = scenarios_.data();
  const auto sums = parallel::block_sum(scenarios_.rows(), d * d, [&](std::size_t begin, std::size_t end,
                                                                      std::span<double> acc) {
    std::vector<double> x(d);
    Eigen::Map<Matrix> h(acc.data(), di, di);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      loss_.add_kink_hessian(x, smoothing_, h);
    }
  });
  Matrix h = Eigen::Map<const Matrix>(sums.data(), di, di) / static_cast<double>(scenarios_.rows());
  return 0.5 * (h + h.transpose());
}

void MonteCarloEstimator::check_shock(const ScenarioSet& shock) const {
  if (shock.rows() != scenarios_.rows() || shock.cols() != scenarios_.cols())
    throw InputError("shock scenarios (" + std::to_string(shock.rows()) + " x " + std::to_string(shock.cols()) +
                     ") are not aligned with the loss scenarios (" + std::to_string(scenarios_.rows()) + " x " +
                     std::to_string(scenarios_.cols()) + ")");
}

Moment MonteCarloEstimator::gradient_dot(const Vector& m, const ScenarioSet& shock) const {
  check_shock(shock);
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  const RowMatrix& data = scenarios_.data();
  const RowMatrix& ydata = shock.data();
  const auto sums = parallel::block_sum(scenarios_.rows(), 2, [&](std::size_t begin, std::size_t end,
                                                                  std::span<double> acc) {
    std::vector<double> x(d), g(d);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      const auto y = row_span(ydata, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      loss_.gradient(x, g);
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += g[k] * y[k];
      acc[0] += dot;
      acc[1] += dot * dot;
    }
  });
  const std::size_t n = scenarios_.rows();
  return {sums[0] / static_cast<double>(n), standard_error(sums[0], sums[1], n)};
}

Vector MonteCarloEstimator::hessian_times(const Vector& m, const ScenarioSet& shock) const {
  check_shock(shock);
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  if (!loss_.twice_differentiable())
    throw UnsupportedError("Hessian-based sensitivities are not available for " + loss_.name() +
                           "; use finite differences through the solver");
  const bool jumps = mode_ == HessianMode::with_jumps && loss_.has_jump_terms();
  const RowMatrix& data = scenarios_.data();
  const RowMatrix& ydata = shock.data();
  const auto di = static_cast<Eigen::Index>(d);
  const auto sums = parallel::block_sum(scenarios_.rows(), d, [&](std::size_t begin, std::size_t end,
                                                                  std::span<double> acc) {
    std::vector<double> x(d);
    Matrix h(di, di);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      const auto y = row_span(ydata, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      h.setZero();
      loss_.add_hessian(x, h);
      if (jumps) loss_.add_jump_hessian(x, smoothing_, h);
      const Eigen::Map<const Vector> yv(y.data(), di);
      Eigen::Map<Vector>(acc.data(), di) += h * yv;
    }
  });
  return Eigen::Map<const Vector>(sums.data(), di) / static_cast<double>(scenarios_.rows());
}

std::pair<Moment, Vector> MonteCarloEstimator::systemic_moments(const Vector& m) const {
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  if (!loss_.alpha_decomposable())
    throw UnsupportedError("loss " + loss_.name() + " has no sum g(x_k) + alpha h(x) decomposition");
  const RowMatrix& data = scenarios_.data();
  const auto sums = parallel::block_sum(scenarios_.rows(), 2 + d, [&](std::size_t begin, std::size_t end,
                                                                      std::span<double> acc) {
    std::vector<double> x(d), g(d);
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = row_span(data, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      const double h = loss_.systemic_value(x);
      acc[0] += h;
      acc[1] += h * h;
      loss_.systemic_gradient(x, g);
      for (std::size_t k = 0; k < d; ++k) acc[2 + k] += g[k];
    }
  });
  const std::size_t n = scenarios_.rows();
  Vector grad = Eigen::Map<const Vector>(sums.data() + 2, static_cast<Eigen::Index>(d)) / static_cast<double>(n);
  return {Moment{sums[0] / static_cast<double>(n), standard_error(sums[0], sums[1], n)}, grad};
}

std::vector<double> MonteCarloEstimator::loss_values(const Vector& m) const {
  const std::size_t d = loss_.dimension();
  check_allocation(m, d);
  std::vector<double> out(scenarios_.rows());
  const RowMatrix& data = scenarios_.data();
  const std::size_t blocks = (out.size() + parallel::kBlockRows - 1) / parallel::kBlockRows;
  parallel::for_blocks(blocks, [&](std::size_t b) {
    std::vector<double> x(d);
    const std::size_t end = std::min(out.size(), (b + 1) * parallel::kBlockRows);
    for (std::size_t s = b * parallel::kBlockRows; s < end; ++s) {
      const auto row = row_span(data, s);
      for (std::size_t k = 0; k < d; ++k) x[k] = row[k] - m[static_cast<Eigen::Index>(k)];
      out[s] = loss_.value(x);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature

QuadratureOracle::QuadratureOracle(GaussianModel model, LossSpec loss) : model_(std::move(model)), loss_(std::move(loss)) {
  model_.validate();
  const std::size_t d = model_.dimension();
  if (d > 3) throw UnsupportedError("quadrature oracle supports d <= 3, got d = " + std::to_string(d));
  if (d != loss_.dimension()) throw InputError("Gaussian model and loss dimensions differ");
  if (!loss_.kinks_on_coordinate_planes())
    throw UnsupportedError("quadrature oracle needs a loss whose kinks lie on coordinate planes; " + loss_.name() +
                           " does not qualify");
  Eigen::LLT<Matrix> llt(model_.covariance);
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(model_.covariance).eigenvalues().minCoeff();
  if (llt.info() != Eigen::Success || min_eig <= 1e-12)
    throw InputError("quadrature oracle needs a positive-definite covariance (smallest eigenvalue " +
                     std::to_string(min_eig) + ")");
  chol_ = llt.matrixL();
}

Vector QuadratureOracle::scale() const { return model_.covariance.diagonal().cwiseSqrt(); }

Vector QuadratureOracle::upper_quantile() const { return model_.mean + kUpperQuantileZ * scale(); }

void QuadratureOracle::traverse(const Vector& kink, const std::function<void(const Vector&, double)>& leaf) const {
  using Rule = boost::math::quadrature::gauss<double, 64>;
  const auto& abscissa = Rule::abscissa();
  const auto& weight = Rule::weights();
  const auto d = static_cast<Eigen::Index>(model_.dimension());
  Vector z(d), x(d);

  // Applies the 64-point rule on [a, b] by mirroring the tabulated half rule.
  std::function<void(Eigen::Index, double)> level = [&](Eigen::Index k, double w_outer) {
    double shift = model_.mean(k);
    for (Eigen::Index j = 0; j < k; ++j) shift += chol_(k, j) * z(j);
    const double split = (kink(k) - shift) / chol_(k, k);
    double cuts[3] = {-kQuadratureRadius, 0.0, kQuadratureRadius};
    int pieces = 1;
    if (split > -kQuadratureRadius && split < kQuadratureRadius) {
      cuts[1] = split;
      cuts[2] = kQuadratureRadius;
      pieces = 2;
    } else {
      cuts[1] = kQuadratureRadius;
    }
    for (int p = 0; p < pieces; ++p) {
      const double a = cuts[p], b = cuts[p + 1];
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (std::size_t i = 0; i < abscissa.size(); ++i) {
        for (double sign : {-1.0, 1.0}) {
          z(k) = mid + sign * half * abscissa[i];
          const double w = w_outer * half * weight[i] * dist::normal_pdf(z(k));
          if (k + 1 == d) {
            x(k) = shift + chol_(k, k) * z(k);
            for (Eigen::Index j = 0; j < k; ++j) x(j) = model_.mean(j) + chol_.row(j).head(j + 1).dot(z.head(j + 1));
            leaf(x, w);
          } else {
            level(k + 1, w);
          }
        }
      }
    }
  };
  level(0, 1.0);
}

double QuadratureOracle::expectation(const std::function<double(const Vector&)>& f, const Vector& kink) const {
  check_allocation(kink, model_.dimension());
  double total = 0.0;
  traverse(kink, [&](const Vector& x, double w) { total += w * f(x); });
  return total;
}

void QuadratureOracle::integrate(const Vector& m, double& value, Vector& grad, Matrix* hess) const {
  const auto d = static_cast<Eigen::Index>(model_.dimension());
  value = 0.0;
  grad = Vector::Zero(d);
  if (hess) *hess = Matrix::Zero(d, d);
  Vector y(d), g(d);
  Matrix h(d, d);
  traverse(m, [&](const Vector& x, double w) {
    y = x - m;
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(d));
    value += w * loss_.value(ys);
    loss_.gradient(ys, {g.data(), static_cast<std::size_t>(d)});
    grad -= w * g;
    if (hess) {
      h.setZero();
      loss_.add_hessian(ys, h);
      *hess += w * h;
    }
  });
}

ConstraintEstimate QuadratureOracle::evaluate(const Vector& m, bool want_hessian) const {
  check_allocation(m, model_.dimension());
  want_hessian = want_hessian && loss_.twice_differentiable();
  ConstraintEstimate out;
  if (!want_hessian) {
    integrate(m, out.value, out.grad, nullptr);
    return out;
  }
  if (!loss_.has_jump_terms()) {
    Matrix h;
    integrate(m, out.value, out.grad, &h);
    out.hess = h;
    return out;
  }
  integrate(m, out.value, out.grad, nullptr);
  out.hess = model_hessian(m);
  return out;
}

std::optional<Matrix> QuadratureOracle::model_hessian(const Vector& m) const {
  check_allocation(m, model_.dimension());
  if (loss_.twice_differentiable() && !loss_.has_jump_terms()) return evaluate(m, true).hess;
  const auto d = static_cast<Eigen::Index>(model_.dimension());
  Matrix h(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double step = 1e-5 * std::max(1.0, std::sqrt(model_.covariance(k, k)));
    Vector up = m, down = m;
    up(k) += step;
    down(k) -= step;
    double v;
    Vector gu, gd;
    integrate(up, v, gu, nullptr);
    integrate(down, v, gd, nullptr);
    h.col(k) = (gu - gd) / (2.0 * step);
  }
  return Matrix(0.5 * (h + h.transpose()));
}

// ---------------------------------------------------------------------------
// Chebyshev

namespace {

struct AxisBasis {
  std::vector<double> t, dt, ddt;
};

AxisBasis chebyshev_basis(double x, std::size_t n) {
  AxisBasis b{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  b.t[0] = 1.0;
  if (n > 1) {
    b.t[1] = x;
    b.dt[1] = 1.0;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    b.t[k + 1] = 2.0 * x * b.t[k] - b.t[k - 1];
    b.dt[k + 1] = 2.0 * b.t[k] + 2.0 * x * b.dt[k] - b.dt[k - 1];
    b.ddt[k + 1] = 4.0 * b.dt[k] + 2.0 * x * b.ddt[k] - b.ddt[k - 1];
  }
  return b;
}

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

ChebyshevSurrogate ChebyshevSurrogate::fit(const Field& f, Vector lower, Vector upper, std::size_t n,
                                           std::size_t validation_points, std::uint64_t seed) {
  if (n < 2) throw InputError("Chebyshev interpolation needs at least 2 nodes per axis");
  if (lower.size() == 0 || lower.size() != upper.size()) throw InputError("Chebyshev domain bounds are inconsistent");
  if (((upper - lower).array() <= 0.0).any()) throw InputError("Chebyshev domain must have positive width");
  const auto d = static_cast<std::size_t>(lower.size());
  const std::size_t total = ipow(n, d);
  if (total > 5'000'000) throw InputError("Chebyshev tensor grid too large");

  ChebyshevSurrogate s;
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  s.n_ = n;

  std::vector<double> node(n);
  for (std::size_t j = 0; j < n; ++j) node[j] = std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(n - 1));

  std::vector<double> samples(total);
  parallel::for_blocks(total, [&](std::size_t flat) {
    Vector m(static_cast<Eigen::Index>(d));
    std::size_t rest = flat;
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t j = rest % n;
      rest /= n;
      const auto ai = static_cast<Eigen::Index>(a);
      m(ai) = s.lower_(ai) + 0.5 * (node[j] + 1.0) * (s.upper_(ai) - s.lower_(ai));
    }
    const double v = f(m);
    if (!std::isfinite(v)) throw NumericError("Chebyshev fit: function is not finite at a node");
    samples[flat] = v;
  });

  // Discrete cosine transform along one axis at a time.
  Matrix transform(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      double w = 2.0 / static_cast<double>(n - 1);
      if (j == 0 || j == n - 1) w *= 0.5;
      if (k == 0 || k == n - 1) w *= 0.5;
      transform(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          w * std::cos(std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n - 1));
    }
  std::vector<double> work = samples;
  for (std::size_t a = 0; a < d; ++a) {
    const std::size_t stride = ipow(n, d - 1 - a);
    const std::size_t outer = total / (stride * n);
    std::vector<double> line(n), out(n);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < stride; ++i) {
        const std::size_t base = o * stride * n + i;
        for (std::size_t j = 0; j < n; ++j) line[j] = work[base + j * stride];
        for (std::size_t k = 0; k < n; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += transform(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * line[j];
          out[k] = acc;
        }
        for (std::size_t k = 0; k < n; ++k) work[base + k * stride] = out[k];
      }
  }
  s.coef_ = std::move(work);

  if (validation_points > 0) {
    CounterRng rng(seed, 0xC4EB);
    std::vector<Vector> points(validation_points, Vector(static_cast<Eigen::Index>(d)));
    for (auto& p : points)
      for (Eigen::Index a = 0; a < p.size(); ++a) p(a) = s.lower_(a) + rng.uniform() * (s.upper_(a) - s.lower_(a));
    std::vector<double> gaps(validation_points);
    parallel::for_blocks(validation_points, [&](std::size_t i) { gaps[i] = std::abs(f(points[i]) - s.eval(points[i])); });
    s.error_ = 3.0 * *std::max_element(gaps.begin(), gaps.end());
  }
  return s;
}

bool ChebyshevSurrogate::contains(const Vector& m) const {
  if (m.size() != lower_.size()) return false;
  for (Eigen::Index a = 0; a < m.size(); ++a) {
    const double slack = 1e-12 * std::max(1.0, upper_(a) - lower_(a));
    if (!(m(a) >= lower_(a) - slack && m(a) <= upper_(a) + slack)) return false;
  }
  return true;
}

void ChebyshevSurrogate::check_domain(const Vector& m) const {
  if (m.size() != lower_.size())
    throw InputError("Chebyshev surrogate of dimension " + std::to_string(lower_.size()) + " evaluated at size " +
                     std::to_string(m.size()));
  if (!contains(m)) throw InputError("point lies outside the Chebyshev surrogate domain; extrapolation is not allowed");
}

double ChebyshevSurrogate::eval(const Vector& m) const {
  double value;
  Vector grad;
  Matrix hess;
  eval_with_derivatives(m, value, grad, hess);
  return value;
}

void ChebyshevSurrogate::eval_with_derivatives(const Vector& m, double& value, Vector& grad, Matrix& hess) const {
  check_domain(m);
  const std::size_t d = dimension();
  const auto di = static_cast<Eigen::Index>(d);
  std::vector<AxisBasis> basis(d);
  Vector chain(di);
  for (std::size_t a = 0; a < d; ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    const double width = upper_(ai) - lower_(ai);
    const double t = std::clamp(2.0 * (m(ai) - lower_(ai)) / width - 1.0, -1.0, 1.0);
    basis[a] = chebyshev_basis(t, n_);
    chain(ai) = 2.0 / width;
  }
  value = 0.0;
  grad = Vector::Zero(di);
  hess = Matrix::Zero(di, di);
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> t(d), dt(d), ddt(d);
  for (std::size_t flat = 0; flat < coef_.size(); ++flat) {
    std::size_t rest = flat;
    for (std::size_t a = d; a-- > 0;) {
      idx[a] = rest % n_;
      rest /= n_;
    }
    const double c = coef_[flat];
    if (c == 0.0) continue;
    for (std::size_t a = 0; a < d; ++a) {
      t[a] = basis[a].t[idx[a]];
      dt[a] = basis[a].dt[idx[a]];
      ddt[a] = basis[a].ddt[idx[a]];
    }
    double prod = c;
    for (std::size_t a = 0; a < d; ++a) prod *= t[a];
    value += prod;
    for (std::size_t a = 0; a < d; ++a) {
      double ga = c * dt[a], haa = c * ddt[a];
      for (std::size_t b = 0; b < d; ++b)
        if (b != a) {
          ga *= t[b];
          haa *= t[b];
        }
      grad(static_cast<Eigen::Index>(a)) += ga;
      hess(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += haa;
      for (std::size_t b = a + 1; b < d; ++b) {
        double hab = c * dt[a] * dt[b];
        for (std::size_t e = 0; e < d; ++e)
          if (e != a && e != b) hab *= t[e];
        hess(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += hab;
        hess(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) += hab;
      }
    }
  }
  grad = grad.cwiseProduct(chain);
  hess = chain.asDiagonal() * hess * chain.asDiagonal();
}

nlohmann::json ChebyshevSurrogate::to_json() const {
  return {{"lower", std::vector<double>(lower_.data(), lower_.data() + lower_.size())},
          {"upper", std::vector<double>(upper_.data(), upper_.data() + upper_.size())},
          {"nodes_per_axis", n_},
          {"coefficients", coef_},
          {"error_estimate", error_}};
}

ChebyshevSurrogate ChebyshevSurrogate::from_json(const nlohmann::json& j) {
  try {
    ChebyshevSurrogate s;
    const auto lower = j.at("lower").get<std::vector<double>>();
    const auto upper = j.at("upper").get<std::vector<double>>();
    if (lower.empty() || lower.size() != upper.size()) throw InputError("surrogate bounds are inconsistent");
    s.lower_ = Eigen::Map<const Vector>(lower.data(), static_cast<Eigen::Index>(lower.size()));
    s.upper_ = Eigen::Map<const Vector>(upper.data(), static_cast<Eigen::Index>(upper.size()));
    s.n_ = j.at("nodes_per_axis").get<std::size_t>();
    s.coef_ = j.at("coefficients").get<std::vector<double>>();
    s.error_ = j.value("error_estimate", 0.0);
    if (s.n_ < 2 || s.coef_.size() != ipow(s.n_, lower.size()))
      throw InputError("surrogate coefficient count does not match nodes_per_axis^d");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed surrogate JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Surrogate constraint

std::pair<Vector, Vector> SurrogateConstraint::default_box(const ConstraintModel& base) {
  const Vector half = (4.0 * base.scale()).cwiseMax(0.5);
  return {base.location() - half, base.location() + half};
}

SurrogateConstraint::SurrogateConstraint(const ConstraintModel& base, std::size_t nodes_per_axis)
    : SurrogateConstraint(base, nodes_per_axis, default_box(base).first, default_box(base).second) {}

SurrogateConstraint::SurrogateConstraint(const ConstraintModel& base, std::size_t nodes_per_axis, Vector lower,
                                         Vector upper)
    : base_(base),
      surrogate_(ChebyshevSurrogate::fit([&base](const Vector& m) { return base.evaluate(m, false).value; },
                                         std::move(lower), std::move(upper), nodes_per_axis)) {
  center_se_ = base_.evaluate(0.5 * (surrogate_.lower() + surrogate_.upper()), false).value_se;
}

ConstraintEstimate SurrogateConstraint::evaluate(const Vector& m, bool want_hessian) const {
  ConstraintEstimate out;
  Matrix hess;
  surrogate_.eval_with_derivatives(m, out.value, out.grad, hess);
  if (want_hessian) out.hess = hess;
  out.value_se = center_se_;
  return out;
}

Vector SurrogateConstraint::upper_quantile() const {
  return base_.upper_quantile().cwiseMax(surrogate_.lower()).cwiseMin(surrogate_.upper());
}

}  // namespace msra
