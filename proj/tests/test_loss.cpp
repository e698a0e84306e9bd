#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "msra/loss.hpp"

using namespace msra;

namespace {

std::vector<LossSpec> families(std::size_t d) {
  std::vector<LossSpec> out{LossSpec::quadratic_systemic(d, 1.0), LossSpec::quadratic_systemic(d, 0.0),
                            LossSpec::quadratic_systemic(d, 0.7, false), LossSpec::ph1(d, 0.5, 1.0),
                            LossSpec::ph2(d, 0.5, 1.0), LossSpec::c1(d, Kernel::exponential()),
                            LossSpec::c2(d, Kernel::quadratic_plus()), LossSpec::c2(d, Kernel::piecewise_linear(0.3)),
                            LossSpec::c3(d, 0.5, 1.0, Kernel::exponential())};
  if (d == 2) out.push_back(LossSpec::exp_bivariate(1.0));
  return out;
}

Vector random_point(std::mt19937_64& gen, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector x(static_cast<Eigen::Index>(d));
  for (auto& v : x) v = normal(gen);
  return x;
}

}  // namespace

TEST_CASE("quadratic systemic values") {
  const LossSpec l = LossSpec::quadratic_systemic(2, 1.0);
  CHECK(l.eval(Vector::Zero(2)) == -1.0);
  CHECK(l.eval(Vector::Ones(2)) == 3.0);
  CHECK(LossSpec::quadratic_systemic(2, 1.0, false).eval(Vector::Ones(2)) == 1.0);
}

TEST_CASE("exponential bivariate loss keeps the closed-form normalisation") {
  for (double alpha : {0.0, 0.5, 1.0, 3.0})
    CHECK(LossSpec::exp_bivariate(alpha).eval(Vector::Zero(2)) == doctest::Approx(alpha / (1.0 + alpha)));
  Vector x(2);
  x << 0.3, -0.2;
  const double expected = (0.5 * std::exp(0.6) + 0.5 * std::exp(-0.4) + 2.0 * std::exp(0.1) - 1.0) / 3.0;
  CHECK(LossSpec::exp_bivariate(2.0).eval(x) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("gradient and hessian examples") {
  Vector x(2);
  x << 2.0, -3.0;
  const Vector g = LossSpec::quadratic_systemic(2, 0.0).grad(x);
  CHECK(g(0) == 3.0);
  CHECK(g(1) == 1.0);
  const Matrix h = LossSpec::quadratic_systemic(2, 1.0).hess(Vector::Ones(2));
  CHECK(h == Matrix::Ones(2, 2));
  CHECK_THROWS_AS(LossSpec::ph1(2, 0.5, 1.0).hess(Vector::Ones(2)), UnsupportedError);
  CHECK_THROWS_AS(LossSpec::ph2(3, 0.5, 1.0).hess(Vector::Ones(3)), UnsupportedError);
  Vector kink = Vector::Zero(2);
  CHECK(LossSpec::ph1(2, 0.5, 1.0).grad(kink) == Vector::Ones(2));
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 gen(3);
  for (std::size_t d : {2u, 3u, 5u}) {
    for (const LossSpec& l : families(d)) {
      double worst = 0.0;
      for (int i = 0; i < 100; ++i) {
        Vector x = random_point(gen, d, 1.0);
        const Vector g = l.grad(x);
        for (Eigen::Index k = 0; k < x.size(); ++k) {
          Vector up = x, down = x;
          up(k) += 1e-6;
          down(k) -= 1e-6;
          worst = std::max(worst, std::abs((l.eval(up) - l.eval(down)) / 2e-6 - g(k)));
        }
      }
      INFO(l.name());
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("hessians match finite differences of the gradient") {
  std::mt19937_64 gen(4);
  for (const LossSpec& l : families(3)) {
    if (!l.twice_differentiable()) continue;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector x = random_point(gen, 3, 1.0);
      const Matrix h = l.hess(x);
      for (Eigen::Index k = 0; k < 3; ++k) {
        Vector up = x, down = x;
        up(k) += 1e-6;
        down(k) -= 1e-6;
        worst = std::max(worst, ((l.grad(up) - l.grad(down)) / 2e-6 - h.col(k)).cwiseAbs().maxCoeff());
      }
    }
    INFO(l.name());
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  CHECK_THROWS_AS(LossSpec::quadratic_systemic(3, 1.0).eval(Vector::Zero(2)), InputError);
  CHECK_THROWS_AS(LossSpec::ph1(2, 0.5, 1.0).grad(Vector::Zero(4)), InputError);
  CHECK_THROWS_AS(LossSpec::quadratic_systemic(2, -1.0), InputError);
  CHECK_THROWS_AS(LossSpec::ph1(2, 1.5, 1.0), InputError);
  CHECK_THROWS_AS(LossSpec::c2(2, Kernel::piecewise_linear(1.0)), InputError);
}

TEST_CASE("property: monotone in every coordinate") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> bump(0.0, 1.0);
  for (const LossSpec& l : families(3)) {
    bool ok = true;
    for (int i = 0; i < 2000; ++i) {
      const Vector x = random_point(gen, 3, 2.0);
      Vector y = x;
      for (auto& v : y) v += bump(gen);
      ok &= l.eval(x) <= l.eval(y);
    }
    INFO(l.name());
    CHECK(ok);
  }
}

TEST_CASE("property: convexity on random pairs") {
  std::mt19937_64 gen(6);
  for (const LossSpec& l : families(3)) {
    bool ok = true;
    for (int i = 0; i < 10000; ++i) {
      const Vector x = random_point(gen, 3, 2.0), y = random_point(gen, 3, 2.0);
      for (double t : {0.25, 0.5, 0.75})
        ok &= l.eval(t * x + (1 - t) * y) <= t * l.eval(x) + (1 - t) * l.eval(y) + 1e-12;
    }
    INFO(l.name());
    CHECK(ok);
  }
}

TEST_CASE("property: permutation invariance over all permutations") {
  std::mt19937_64 gen(7);
  for (std::size_t d : {2u, 3u, 4u}) {
    for (const LossSpec& l : families(d)) {
      bool ok = true;
      for (int i = 0; i < 200; ++i) {
        const Vector x = random_point(gen, d, 2.0);
        const double base = l.eval(x);
        std::vector<Eigen::Index> idx(d);
        std::iota(idx.begin(), idx.end(), 0);
        do {
          Vector p(x.size());
          for (std::size_t k = 0; k < d; ++k) p(static_cast<Eigen::Index>(k)) = x(idx[k]);
          ok &= l.eval(p) == base;
        } while (std::next_permutation(idx.begin(), idx.end()));
      }
      INFO(l.name() << " d=" << d);
      CHECK(ok);
    }
  }
}

TEST_CASE("property: positive homogeneity of the piecewise-linear losses") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> lam(1e-6, 10.0);
  for (const LossSpec& l : {LossSpec::ph1(4, 0.5, 1.0), LossSpec::ph2(4, 0.3, 2.0)}) {
    double worst = 0.0;
    for (int i = 0; i < 5000; ++i) {
      const Vector x = random_point(gen, 4, 3.0);
      const double t = lam(gen);
      worst = std::max(worst, std::abs(l.eval(t * x) - t * l.eval(x)) / std::max(1.0, std::abs(t * l.eval(x))));
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("property: risk-aversion witness of the quadratic systemic loss") {
  std::mt19937_64 gen(9);
  const LossSpec l = LossSpec::quadratic_systemic(4, 1.0);
  bool ok = true;
  for (int i = 0; i < 20000; ++i) {
    const Vector x = random_point(gen, 4, 5.0);
    ok &= l.eval(x) - x.sum() >= -1.0 - 1e-14 * (1.0 + x.cwiseAbs().sum());
  }
  CHECK(ok);
}

TEST_CASE("validate_loss examples") {
  const auto qs = validate_loss(LossSpec::quadratic_systemic(2, 1.0));
  CHECK(qs.passed());
  CHECK(qs.permutation_invariant);
  CHECK_FALSE(qs.recession_direction_found);

  const auto c1 = validate_loss(LossSpec::c1(2, Kernel::exponential()));
  CHECK(c1.recession_direction_found);
  REQUIRE(c1.recession_direction.size() == 2);
  CHECK(std::abs(c1.recession_direction[0] + c1.recession_direction[1]) < 1e-12);
  CHECK(std::abs(std::abs(c1.recession_direction[0]) - std::sqrt(0.5)) < 1e-12);

  const auto c2 = validate_loss(LossSpec::c2(3, Kernel::exponential()));
  CHECK_FALSE(c2.recession_direction_found);
  CHECK(c2.passed());

  const auto ph2 = validate_loss(LossSpec::ph2(4, 0.5, 1.0));
  CHECK(ph2.passed());
  CHECK(ph2.homogeneity_checked);
  CHECK(ph2.positively_homogeneous);
}

TEST_CASE("alpha decomposition") {
  std::mt19937_64 gen(10);
  const LossSpec l = LossSpec::quadratic_systemic(3, 0.8);
  const LossSpec l0 = l.with_alpha(0.0);
  CHECK(l.alpha_decomposable());
  CHECK_FALSE(LossSpec::ph2(3, 0.5, 1.0).alpha_decomposable());
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_point(gen, 3, 1.5);
    const std::vector<double> xs(x.data(), x.data() + 3);
    CHECK(l.eval(x) == doctest::Approx(l0.eval(x) + 0.8 * l.systemic_value(xs)).epsilon(1e-13));
    std::vector<double> gh(3);
    l.systemic_gradient(xs, gh);
    const Vector expected = (l.grad(x) - l0.grad(x)) / 0.8;
    for (int k = 0; k < 3; ++k) CHECK(gh[static_cast<std::size_t>(k)] == doctest::Approx(expected(k)).epsilon(1e-12));
  }
}

TEST_CASE("loss JSON round trip and strictness") {
  for (const LossSpec& l : families(3)) {
    const LossSpec back = LossSpec::from_json(l.to_json());
    CHECK(back.to_json() == l.to_json());
  }
  using nlohmann::json;
  CHECK_THROWS_AS(LossSpec::from_json(json{{"family", "ph1"}, {"d", 2}, {"extra", 1}}), InputError);
  CHECK_THROWS_AS(LossSpec::from_json(json{{"family", "nope"}}), InputError);
  CHECK_THROWS_AS(LossSpec::from_json(json{{"family", "exp_bivariate"}, {"d", 3}}), InputError);
  CHECK_THROWS_AS(LossSpec::from_json(json{{"family", "c1"}, {"d", 2}}), InputError);
  const LossSpec d = LossSpec::from_json(json{{"family", "quadratic_systemic"}});
  CHECK(d.dimension() == 2);
  CHECK(d.alpha() == 1.0);
  CHECK(d.linear_term());
}
