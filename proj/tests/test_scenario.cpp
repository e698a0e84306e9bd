#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "msra/parallel.hpp"
#include "msra/random.hpp"
#include "msra/scenario.hpp"

using namespace msra;

namespace {

StudentCopulaModel one_underlying(Matrix positions) {
  StudentCopulaModel m;
  m.correlation = Matrix::Ones(1, 1);
  m.copula_dof = 6.0;
  m.marginal_dof = Vector::Constant(1, 6.0);
  m.fudge = Vector::Constant(1, 1.0);
  m.spot = Vector::Constant(1, 100.0);
  m.positions.matrix = std::move(positions);
  return m;
}

}  // namespace

TEST_CASE("zero covariance gives an all-zero matrix") {
  GaussianModel g{Vector::Zero(3), Matrix::Zero(3, 3)};
  const ScenarioSet s = simulate_gaussian(g, 5, 123);
  CHECK(s.rows() == 5);
  CHECK(s.cols() == 3);
  CHECK(s.data().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("standard normal sample variances at n = 2e6") {
  const ScenarioSet s = simulate_gaussian(test::bivariate(0.0), 2000000, 42);
  for (const auto& c : summarize(s)) {
    const double var = c.stddev * c.stddev;
    CHECK(var >= 0.997);
    CHECK(var <= 1.003);
  }
}

TEST_CASE("sample means converge to the model mean") {
  GaussianModel g{Vector(2), Matrix::Identity(2, 2)};
  g.mean << 1.0, 2.0;
  const auto stats = summarize(simulate_gaussian(g, 1000000, 9));
  CHECK(std::abs(stats[0].mean - 1.0) <= 0.004);
  CHECK(std::abs(stats[1].mean - 2.0) <= 0.004);
}

TEST_CASE("covariance validation") {
  GaussianModel bad = test::bivariate(0.0);
  bad.covariance(0, 1) = bad.covariance(1, 0) = 2.0;
  try {
    simulate_gaussian(bad, 10, 1);
    FAIL("non-PSD covariance accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("eigenvalue -1") != std::string::npos);
  }
  GaussianModel asym = test::bivariate(0.0);
  asym.covariance(0, 1) = 1e-9;
  CHECK_THROWS_AS(simulate_gaussian(asym, 10, 1), InputError);

  GaussianModel tiny{Vector::Zero(2), Matrix(2, 2)};
  tiny.covariance << 1.0, 1.0 + 1e-11, 1.0 + 1e-11, 1.0;
  const ScenarioSet s = simulate_gaussian(tiny, 100, 1);
  CHECK_FALSE(s.diagnostics().empty());
  CHECK(s.data().allFinite());
}

TEST_CASE("reproducible and independent of thread count") {
  const auto g = test::bivariate(0.3);
  const auto before = parallel::thread_count();
  parallel::set_thread_count(1);
  const std::string a = serialize_scenarios(simulate_gaussian(g, 50000, 5));
  parallel::set_thread_count(7);
  const std::string b = serialize_scenarios(simulate_gaussian(g, 50000, 5));
  parallel::set_thread_count(before);
  CHECK(a == b);
  CHECK(a != serialize_scenarios(simulate_gaussian(g, 50000, 6)));
}

TEST_CASE("scenario set rejects non-finite entries") {
  RowMatrix m = RowMatrix::Zero(2, 2);
  m(1, 1) = std::nan("");
  CHECK_THROWS_AS(ScenarioSet(m, 0, "x"), InputError);
  CHECK_THROWS_AS(ScenarioSet(RowMatrix(0, 2), 0, "x"), InputError);
}

TEST_CASE("copula with zero positions is all zero") {
  StudentCopulaModel m = synthetic_book(4, 3, 1);
  m.positions.matrix.setZero();
  CHECK(simulate_student_copula(m, 1000, 3).data().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single long contract has zero mean loss") {
  Matrix pp(2, 1);
  pp << 1.0, -1.0;
  const StudentCopulaModel m = one_underlying(pp);
  const ScenarioSet s = simulate_student_copula(m, 1000000, 17);
  const auto stats = summarize(s);
  CHECK(std::abs(stats[0].mean) <= 0.3);
  for (Eigen::Index r = 0; r < s.data().rows(); ++r) REQUIRE(s.data()(r, 0) == -s.data()(r, 1));
}

TEST_CASE("copula marginals pass a Kolmogorov-Smirnov test") {
  StudentCopulaModel m = synthetic_book(3, 3, 2);
  const std::size_t n = 1000000;
  const RowMatrix t = simulate_copula_marginals(m, n, 11);
  const double critical = 1.94947 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    std::vector<double> col(n);
    for (std::size_t s = 0; s < n; ++s) col[s] = t(static_cast<Eigen::Index>(s), j);
    std::sort(col.begin(), col.end());
    double ks = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double f = dist::student_cdf(col[s], m.marginal_dof(j));
      ks = std::max({ks, f - static_cast<double>(s) / n, static_cast<double>(s + 1) / n - f});
    }
    CHECK(ks < critical);
  }
}

TEST_CASE("clearing identity: member losses sum to zero per scenario") {
  const StudentCopulaModel m = synthetic_book(10, 5, 4);
  const ScenarioSet s = simulate_student_copula(m, 20000, 8);
  for (Eigen::Index r = 0; r < s.data().rows(); ++r) {
    const double scale = s.data().row(r).cwiseAbs().sum();
    REQUIRE(std::abs(s.data().row(r).sum()) <= 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("copula model validation and diagnostics") {
  Matrix pp(2, 1);
  pp << 1.0, -1.0;
  StudentCopulaModel m = one_underlying(pp);
  m.marginal_dof(0) = 2.0;
  const ScenarioSet s = simulate_student_copula(m, 100, 1);
  CHECK_FALSE(s.diagnostics().empty());
  m.spot(0) = 0.0;
  CHECK_THROWS_AS(simulate_student_copula(m, 100, 1), InputError);
  StudentCopulaModel unbalanced = one_underlying(pp);
  unbalanced.positions.matrix(1, 0) = -0.5;
  CHECK_THROWS_AS(simulate_student_copula(unbalanced, 100, 1), InputError);
}

TEST_CASE("positions CSV parsing") {
  const Positions p = parse_positions("member,FCE\nA,5\nB,-5\n");
  CHECK(p.matrix.rows() == 2);
  CHECK(p.matrix.col(0).sum() == 0.0);
  CHECK(p.members == std::vector<std::string>{"A", "B"});
  CHECK(p.tickers == std::vector<std::string>{"FCE"});

  try {
    parse_positions("member,FCE\nA,5\nB,-4\n");
    FAIL("unbalanced column accepted");
  } catch (const PositionsParseError& e) {
    CHECK(std::string(e.what()) == "column FCE sums to 1");
    CHECK(e.column() == 2);
  }
  try {
    parse_positions("member,FCE,ABC\nA,5,1\nB,-5\n");
    FAIL("ragged row accepted");
  } catch (const PositionsParseError& e) {
    CHECK(e.row() == 3);
  }
  try {
    parse_positions("member,FCE\nA,five\nB,-5\n");
    FAIL("non-numeric cell accepted");
  } catch (const PositionsParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
  }
}

TEST_CASE("positions file labels reach the scenario set") {
  const auto dir = test::temp_dir("positions");
  std::ofstream(dir / "p.csv") << "member,U1,U2\nalpha,3,-1\nbeta,-2,4\ngamma,-1,-3\n";
  StudentCopulaModel m = synthetic_book(3, 2, 1);
  m.positions = load_positions(dir / "p.csv");
  const ScenarioSet s = simulate_student_copula(m, 200, 1);
  CHECK(s.labels() == std::vector<std::string>{"alpha", "beta", "gamma"});
  CHECK_THROWS_AS(load_positions(dir / "missing.csv"), IoError);
}

TEST_CASE("binary container layout and round trip") {
  const ScenarioSet s = simulate_gaussian(test::bivariate(0.5), 3, 77);
  const std::string bytes = serialize_scenarios(s);
  CHECK(bytes.substr(0, 4) == "MSRA");
  std::uint16_t version;
  std::uint64_t n, d;
  std::memcpy(&version, bytes.data() + 4, 2);
  std::memcpy(&n, bytes.data() + 6, 8);
  std::memcpy(&d, bytes.data() + 14, 8);
  CHECK(version == 1);
  CHECK(n == 3);
  CHECK(d == 2);
  double first;
  std::memcpy(&first, bytes.data() + 22, 8);
  CHECK(first == s.data()(0, 0));
  const ScenarioSet back = deserialize_scenarios(bytes);
  CHECK(back.data() == s.data());
  CHECK(back.seed() == 77);
  CHECK(back.model_tag() == s.model_tag());

  const auto dir = test::temp_dir("container");
  write_scenarios(s, dir / "s.msra");
  CHECK(read_scenarios(dir / "s.msra").data() == s.data());
  CHECK_THROWS_AS(deserialize_scenarios("XXXX"), IoError);
  CHECK_THROWS_AS(deserialize_scenarios(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(read_scenarios(dir / "none.msra"), IoError);

  write_scenarios_csv(s, dir / "s.csv");
  std::ifstream csv(dir / "s.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "X1,X2");
}

TEST_CASE("empirical quantile convention") {
  CHECK(empirical_quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(empirical_quantile({1, 2, 3, 4, 5}, 0.9) == doctest::Approx(4.6));
  CHECK(empirical_quantile({5, 1, 4, 2, 3}, 0.25) == 2.0);
  CHECK(empirical_quantile(std::vector<double>(10, 7.5), 0.99) == 7.5);
}
