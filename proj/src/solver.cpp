#include "msra/solver.hpp"

#include <algorithm>
#include <cmath>

#include "msra/log.hpp"

namespace msra {
namespace {

constexpr double kProximal = 1e-10;
constexpr int kMaxHalvings = 20;

struct Iterate {
  Vector m;
  double lambda = 1.0;
  ConstraintEstimate est;
  Vector residual;
  double merit = 0.0;
};

Vector residual_of(const ConstraintEstimate& e, double lambda) {
  const auto d = e.grad.size();
  Vector r(d + 1);
  r.head(d) = -lambda * e.grad.array() - 1.0;
  r(d) = e.value;
  return r;
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::string format_vector(const Vector& v) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v(i));
  }
  return out + ")";
}

/// Orthonormal basis of the zero-sum subspace {u : sum u = 0}.
Matrix zero_sum_basis(Eigen::Index d) {
  const Matrix ones = Matrix::Constant(d, 1, 1.0);
  Eigen::HouseholderQR<Matrix> qr(ones);
  const Matrix q = qr.householderQ();
  return q.rightCols(d - 1);
}

/// Zero-sum directions along which the Hessian has (numerically) no curvature.
Matrix flat_zero_sum_directions(const Matrix& h) {
  const auto d = h.rows();
  if (d < 2) return Matrix(d, 0);
  const Matrix q = zero_sum_basis(d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.transpose() * h * q);
  const double threshold = 1e-9 * std::max(1.0, h.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> flat;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (eig.eigenvalues()(i) <= threshold) flat.push_back(i);
  Matrix u(d, static_cast<Eigen::Index>(flat.size()));
  for (std::size_t j = 0; j < flat.size(); ++j) u.col(static_cast<Eigen::Index>(j)) = q * eig.eigenvectors().col(flat[j]);
  return u;
}

Matrix kkt_jacobian(const Matrix& h, const Vector& g, double lambda) {
  const auto d = g.size();
  Matrix j = Matrix::Zero(d + 1, d + 1);
  j.topLeftCorner(d, d) = -lambda * h;
  j.topRightCorner(d, 1) = g;
  j.bottomLeftCorner(1, d) = -g.transpose();
  return j;
}

struct Start {
  Vector m;
  double lambda;
};

Start starting_point(const ConstraintModel& model, const SolverOptions& options, std::vector<std::string>& notes) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  Vector m = options.init ? *options.init : model.upper_quantile();
  if (m.size() != d) throw InputError("initial allocation has the wrong dimension");
  if (options.nonnegative) m = m.cwiseMax(0.0);
  if (!model.in_domain(m)) m = model.location();

  ConstraintEstimate e = model.evaluate(m, false);
  if (e.value > 0.0) {
    // Feasibility probe along the all-ones direction.
    const double unit = std::max(1.0, model.scale().maxCoeff());
    double t = unit;
    bool found = false;
    for (int i = 0; i < 60; ++i, t *= 2.0) {
      const Vector trial = m + Vector::Constant(d, t);
      if (!model.in_domain(trial)) break;
      const ConstraintEstimate et = model.evaluate(trial, false);
      if (et.value <= 0.0) {
        m = trial;
        e = et;
        found = true;
        break;
      }
    }
    if (!found)
      throw NumericError("constraint stays positive along m + t(1,...,1) up to t = " + std::to_string(t) +
                         ": no acceptable allocation found (unbounded direction)");
    notes.push_back("start shifted by " + std::to_string(t) + " along (1,...,1) to reach the acceptance set");
  }
  const double mean_slope = -e.grad.mean();
  const double lambda = mean_slope > 0.0 ? std::clamp(1.0 / mean_slope, 1e-6, 1e6) : 1.0;
  return {m, lambda};
}

// --- Newton on the first-order system -------------------------------------

enum class Outcome { converged, stalled, exhausted };

Outcome newton(const ConstraintModel& model, Iterate& it, double tol, std::size_t max_iter, std::size_t& iterations) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  auto load = [&](Iterate& x) {
    x.est = model.evaluate(x.m, true);
    x.residual = residual_of(x.est, x.lambda);
    x.merit = 0.5 * x.residual.squaredNorm();
  };
  load(it);
  while (true) {
    if (log::enabled(log::Level::debug))
      log::write(log::Level::debug, "newton " + std::to_string(iterations) + " residual " +
                                        std::to_string(inf_norm(it.residual)) + " lambda " + std::to_string(it.lambda));
    if (inf_norm(it.residual) <= tol) return Outcome::converged;
    if (iterations >= max_iter) return Outcome::exhausted;
    if (!it.est.hess) return Outcome::stalled;
    ++iterations;
    const Matrix j = kkt_jacobian(*it.est.hess, -it.est.grad, it.lambda);
    const Vector step = j.completeOrthogonalDecomposition().solve(-it.residual);
    if (!step.allFinite()) return Outcome::stalled;
    double alpha = 1.0;
    if (it.lambda + step(d) < 0.1 * it.lambda) alpha = 0.9 * it.lambda / -step(d);
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      Iterate trial;
      trial.m = it.m + alpha * step.head(d);
      trial.lambda = it.lambda + alpha * step(d);
      if (!model.in_domain(trial.m)) continue;
      load(trial);
      if (std::isfinite(trial.merit) && trial.merit <= (1.0 - 2e-4 * alpha) * it.merit) {
        it = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) return Outcome::stalled;
  }
}

// --- SQP on the primal ------------------------------------------------------

struct QpSolution {
  Vector p;
  double mu = 0.0;
  std::vector<bool> at_bound;
};

/// min 1'p + p'Bp/2  s.t.  f + a'p <= 0  and  p >= lower (when bounded).
QpSolution solve_qp(const Matrix& b, const Vector& a, double f, const Vector& lower, bool bounded,
                    const std::vector<bool>& initial_bounds) {
  const auto d = a.size();
  std::vector<bool> fixed = bounded ? initial_bounds : std::vector<bool>(static_cast<std::size_t>(d), false);
  bool constraint_active = true;
  QpSolution sol;
  const double tiny = 1e-12;
  for (int round = 0; round < 4 * static_cast<int>(d) + 20; ++round) {
    std::vector<Eigen::Index> free_idx;
    Vector p = Vector::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      if (fixed[static_cast<std::size_t>(k)])
        p(k) = lower(k);
      else
        free_idx.push_back(k);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    double mu = 0.0;
    bool active = constraint_active && nf > 0;
    if (nf > 0) {
      Matrix bff(nf, nf);
      Vector rhs(nf), af(nf);
      const Vector bp_fixed = b * p;
      for (Eigen::Index i = 0; i < nf; ++i) {
        af(i) = a(free_idx[static_cast<std::size_t>(i)]);
        rhs(i) = -1.0 - bp_fixed(free_idx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < nf; ++j)
          bff(i, j) = b(free_idx[static_cast<std::size_t>(i)], free_idx[static_cast<std::size_t>(j)]);
      }
      Vector pf;
      if (active) {
        Matrix kkt = Matrix::Zero(nf + 1, nf + 1);
        kkt.topLeftCorner(nf, nf) = bff;
        kkt.topRightCorner(nf, 1) = af;
        kkt.bottomLeftCorner(1, nf) = af.transpose();
        Vector r(nf + 1);
        r.head(nf) = rhs;
        r(nf) = -f - a.dot(p);
        const Vector z = kkt.completeOrthogonalDecomposition().solve(r);
        pf = z.head(nf);
        mu = z(nf);
      } else {
        pf = bff.completeOrthogonalDecomposition().solve(rhs);
      }
      for (Eigen::Index i = 0; i < nf; ++i) p(free_idx[static_cast<std::size_t>(i)]) = pf(i);
    }
    sol = {p, mu, fixed};

    // Primal feasibility.
    if (bounded) {
      Eigen::Index worst = -1;
      double worst_gap = tiny;
      for (Eigen::Index k : free_idx) {
        const double gap = lower(k) - p(k);
        if (gap > worst_gap) {
          worst_gap = gap;
          worst = k;
        }
      }
      if (worst >= 0) {
        fixed[static_cast<std::size_t>(worst)] = true;
        continue;
      }
    }
    if (!active && f + a.dot(p) > tiny * std::max(1.0, std::abs(f))) {
      if (nf == 0) break;  // bounds alone cannot reach the constraint; keep the best effort
      constraint_active = true;
      continue;
    }
    // Dual feasibility.
    if (active && mu < -tiny) {
      constraint_active = false;
      continue;
    }
    if (bounded) {
      const Vector reduced = Vector::Ones(d) + b * p + mu * a;
      Eigen::Index worst = -1;
      double worst_mult = -tiny;
      for (Eigen::Index k = 0; k < d; ++k)
        if (fixed[static_cast<std::size_t>(k)] && reduced(k) < worst_mult) {
          worst_mult = reduced(k);
          worst = k;
        }
      if (worst >= 0) {
        fixed[static_cast<std::size_t>(worst)] = false;
        continue;
      }
    }
    break;
  }
  return sol;
}

/// First-order residual for the (optionally bounded) primal problem.
Vector sqp_residual(const ConstraintEstimate& e, const Vector& m, double mu, bool bounded) {
  const auto d = m.size();
  Vector r(d + 1);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double stationarity = -mu * e.grad(k) - 1.0;
    r(k) = (bounded && m(k) <= 0.0) ? std::max(0.0, stationarity) : stationarity;
  }
  r(d) = (bounded && mu <= 0.0) ? std::max(0.0, e.value) : e.value;
  return r;
}

Outcome sqp(const ConstraintModel& model, Iterate& it, double tol, std::size_t max_iter, bool bounded,
            std::size_t& iterations, std::vector<std::string>& notes) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  double penalty = std::max(1.0, 2.0 * it.lambda);
  Matrix bfgs = Matrix::Identity(d, d);
  bool using_bfgs = false;
  std::vector<bool> at_bound(static_cast<std::size_t>(d), false);
  bool multiplier_only = false;

  it.est = model.evaluate(it.m, false);
  auto merit = [&](const Vector& m, double value) { return m.sum() + penalty * std::max(0.0, value); };

  while (true) {
    it.residual = sqp_residual(it.est, it.m, it.lambda, bounded);
    if (log::enabled(log::Level::debug))
      log::write(log::Level::debug, "sqp " + std::to_string(iterations) + " residual " +
                                        std::to_string(inf_norm(it.residual)) + " mu " + std::to_string(it.lambda));
    if (inf_norm(it.residual) <= tol) return Outcome::converged;
    if (iterations >= max_iter) return Outcome::exhausted;
    ++iterations;

    Matrix b;
    if (auto h = model.model_hessian(it.m); h && h->allFinite() && !using_bfgs) {
      b = std::max(it.lambda, 1e-8) * *h;
    } else {
      if (!using_bfgs) notes.push_back("SQP switched to damped BFGS Hessian updates");
      using_bfgs = true;
      b = bfgs;
    }
    b.diagonal().array() += kProximal;

    Vector lower = bounded ? Vector(-it.m) : Vector::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k) at_bound[static_cast<std::size_t>(k)] = bounded && it.m(k) <= 0.0;
    const QpSolution qp = solve_qp(b, it.est.grad, it.est.value, lower, bounded, at_bound);
    if (!qp.p.allFinite()) return Outcome::stalled;
    penalty = std::max(penalty, 2.0 * std::abs(qp.mu) + 1e-3);

    const double phi = merit(it.m, it.est.value);
    const double slope = qp.p.sum() - penalty * std::max(0.0, it.est.value);
    double alpha = 1.0;
    bool accepted = false;
    ConstraintEstimate next;
    Vector m_next;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      m_next = it.m + alpha * qp.p;
      if (bounded) m_next = m_next.cwiseMax(0.0);
      if (!model.in_domain(m_next)) continue;
      next = model.evaluate(m_next, false);
      if (merit(m_next, next.value) <= phi + 1e-4 * alpha * std::min(slope, 0.0)) {
        accepted = true;
        break;
      }
    }
    const double mu_next = std::max(0.0, qp.mu);
    if (!accepted) {
      // Accept the multiplier update alone if it closes the stationarity gap.
      const Vector r = sqp_residual(it.est, it.m, mu_next, bounded);
      if (!multiplier_only && inf_norm(r) < inf_norm(it.residual)) {
        multiplier_only = true;
        it.lambda = mu_next;
        continue;
      }
      return Outcome::stalled;
    }
    if (using_bfgs) {
      const Vector s = m_next - it.m;
      Vector y = mu_next * (next.grad - it.est.grad);
      const Vector bs = bfgs * s;
      const double sbs = s.dot(bs);
      if (sbs > 1e-300) {
        double sy = s.dot(y);
        if (sy < 0.2 * sbs) {
          const double theta = 0.8 * sbs / (sbs - sy);
          y = theta * y + (1.0 - theta) * bs;
          sy = s.dot(y);
        }
        bfgs += y * y.transpose() / sy - bs * bs.transpose() / sbs;
      }
    }
    multiplier_only = false;
    it.m = m_next;
    it.est = next;
    it.lambda = mu_next;
  }
}

}  // namespace

std::string to_string(SolverMethod method) {
  switch (method) {
    case SolverMethod::automatic: return "auto";
    case SolverMethod::kkt: return "kkt";
    case SolverMethod::sqp: return "sqp";
  }
  return "?";
}

SolverMethod parse_solver_method(const std::string& name) {
  if (name == "auto") return SolverMethod::automatic;
  if (name == "kkt") return SolverMethod::kkt;
  if (name == "sqp") return SolverMethod::sqp;
  throw InputError("unknown solver method '" + name + "' (expected auto, kkt or sqp)");
}

nlohmann::json AllocationResult::to_json() const {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j = {{"m_star", vec(m_star)},
                      {"lambda_star", lambda_star},
                      {"risk", risk},
                      {"kkt_residual", kkt_residual},
                      {"constraint_value", constraint_value},
                      {"iterations", iterations},
                      {"mc_se", mc_standard_error},
                      {"uniqueness", uniqueness == Uniqueness::unique ? "unique" : "suspect_nonunique"},
                      {"method", method},
                      {"tolerance", tolerance},
                      {"diagnostics", diagnostics}};
  if (allocation_se.size()) {
    j["allocation_se"] = vec(allocation_se);
    j["risk_se"] = risk_se;
  }
  return j;
}

nlohmann::json SolverError::to_json() const {
  return {{"error", what()},
          {"last_m", std::vector<double>(m_.data(), m_.data() + m_.size())},
          {"last_lambda", lambda_},
          {"last_residual", residual_},
          {"iterations", iterations_}};
}

Vector kkt_residual(const ConstraintModel& model, const Vector& m, double lambda) {
  if (!(lambda > 0.0)) throw InputError("multiplier lambda must be positive");
  return residual_of(model.evaluate(m, false), lambda);
}

AllocationResult solve_allocation(const ConstraintModel& model, const SolverOptions& options) {
  const LossSpec& loss = model.loss();
  const auto d = static_cast<Eigen::Index>(model.dimension());
  if (options.nonnegative && options.method == SolverMethod::kkt)
    throw InputError("the m >= 0 constraint is only supported by the sqp method");
  if (options.method == SolverMethod::kkt && !loss.twice_differentiable())
    throw UnsupportedError("the kkt method needs a twice-differentiable loss; " + loss.name() + " requires sqp");

  AllocationResult result;
  const auto report = validate_loss(loss, 256, 1);
  bool recession = report.recession_direction_found;
  if (recession) {
    if (!options.accept_nonunique)
      throw InputError("loss " + loss.name() + " has a zero-sum direction of recession; the allocation is not unique");
    result.diagnostics.push_back("loss has a zero-sum direction of recession");
  }

  const Start start = starting_point(model, options, result.diagnostics);
  const ConstraintEstimate first = model.evaluate(start.m, false);
  const double tol = options.tol ? *options.tol : std::max(1e-8, 0.1 * first.value_se);
  if (!(tol > 0.0)) throw InputError("solver tolerance must be positive");
  result.tolerance = tol;

  Iterate it;
  it.m = start.m;
  it.lambda = start.lambda;
  std::size_t iterations = 0;
  Outcome outcome = Outcome::stalled;
  const bool use_newton = !options.nonnegative && options.method != SolverMethod::sqp && loss.twice_differentiable();
  if (use_newton) {
    outcome = newton(model, it, tol, options.max_iterations, iterations);
    result.method = "kkt";
    if (outcome != Outcome::converged && options.method == SolverMethod::automatic) {
      result.diagnostics.push_back("Newton stalled at residual " + std::to_string(inf_norm(it.residual)) +
                                   "; switching to SQP");
      if (!(it.lambda > 0.0) || !it.m.allFinite()) it = Iterate{start.m, start.lambda, {}, {}, 0.0};
      outcome = sqp(model, it, tol, options.max_iterations, false, iterations, result.diagnostics);
      result.method = "kkt+sqp";
    }
  } else {
    outcome = sqp(model, it, tol, options.max_iterations, options.nonnegative, iterations, result.diagnostics);
    result.method = "sqp";
  }
  if (outcome != Outcome::converged) {
    const double res = it.residual.size() ? inf_norm(it.residual) : std::numeric_limits<double>::infinity();
    throw SolverError(std::string(outcome == Outcome::exhausted ? "iteration limit reached" : "no descent possible") +
                          " with KKT residual " + std::to_string(res) + " > tol " + std::to_string(tol) +
                          " at m = " + format_vector(it.m),
                      it.m, it.lambda, res, iterations);
  }

  // Zero-curvature zero-sum directions: report and select the minimum-norm allocation.
  std::optional<Matrix> h = model.model_hessian(it.m);
  if (h && h->allFinite() && d >= 2) {
    const Matrix flat = flat_zero_sum_directions(*h);
    if (flat.cols() > 0) {
      recession = true;
      const Vector projected = it.m - flat * (flat.transpose() * it.m);
      if (model.in_domain(projected)) {
        const ConstraintEstimate pe = model.evaluate(projected, false);
        const Vector pr = options.nonnegative ? sqp_residual(pe, projected, it.lambda, true) : residual_of(pe, it.lambda);
        if (inf_norm(pr) <= tol && (!options.nonnegative || projected.minCoeff() >= 0.0)) {
          it.m = projected;
          it.est = pe;
          it.residual = pr;
          result.diagnostics.push_back("flat zero-sum curvature: minimum-norm allocation selected");
        }
      }
    }
  }

  const ConstraintEstimate final_est = model.evaluate(it.m, false);
  result.m_star = it.m;
  result.lambda_star = it.lambda;
  result.risk = it.m.sum();
  result.constraint_value = final_est.value;
  result.mc_standard_error = final_est.value_se;
  result.kkt_residual = inf_norm(options.nonnegative ? sqp_residual(final_est, it.m, it.lambda, true)
                                                     : residual_of(final_est, it.lambda));
  result.iterations = iterations;
  result.uniqueness = recession ? Uniqueness::suspect_nonunique : Uniqueness::unique;

  if (options.allocation_errors && !options.nonnegative && h && it.lambda > 0.0) {
    if (auto cov = model.score_covariance(it.m, it.lambda)) {
      const Matrix j = kkt_jacobian(*h, -final_est.grad, it.lambda);
      const Matrix jinv = j.completeOrthogonalDecomposition().pseudoInverse();
      const Matrix theta = jinv * *cov * jinv.transpose();
      result.allocation_se = theta.topLeftCorner(d, d).diagonal().cwiseMax(0.0).cwiseSqrt();
      result.risk_se = std::sqrt(std::max(0.0, theta.topLeftCorner(d, d).sum()));
    }
  }
  return result;
}

double risk_measure(const ConstraintModel& model, const SolverOptions& options) {
  return solve_allocation(model, options).risk;
}

}  // namespace msra
