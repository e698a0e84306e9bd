#include "msra/defaultfund.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msra/parallel.hpp"

namespace msra {
namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector relative_diff_pct(const Vector& a, const Vector& b) { return 100.0 * (a - b).cwiseQuotient(b); }

double mean_abs_relative(const Vector& a, const Vector& b) { return (a - b).cwiseQuotient(b).cwiseAbs().mean(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Vector initial_margin(const ScenarioSet& scenarios, double level) {
  require(level > 0.0 && level < 1.0, "IM level must lie in (0, 1)");
  require(scenarios.rows() >= 100, "initial margin needs at least 100 scenarios");
  const auto d = static_cast<Eigen::Index>(scenarios.cols());
  Vector im(d);
  parallel::for_blocks(static_cast<std::size_t>(d), [&](std::size_t k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const Vector column = scenarios.data().col(ki);
    im(ki) = empirical_quantile(std::vector<double>(column.data(), column.data() + column.size()), level);
  });
  return im;
}

double cover2(const ScenarioSet& scenarios, const Vector& im) {
  require(static_cast<std::size_t>(im.size()) == scenarios.cols(), "IM vector does not match the scenario columns");
  const RowMatrix& x = scenarios.data();
  double worst = 0.0;
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    double first = 0.0, second = 0.0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double excess = std::max(0.0, x(s, k) - im(k));
      if (excess > first) {
        second = first;
        first = excess;
      } else if (excess > second) {
        second = excess;
      }
    }
    worst = std::max(worst, first + second);
  }
  return worst;
}

Vector im_weights(const Vector& im) {
  const double total = im.sum();
  if (!(std::abs(total) > 1e-300)) throw NumericError("total initial margin is zero; IM weights are undefined");
  return im / total;
}

Vector shortfall_weights(const AllocationResult& alloc) {
  const double scale = std::max(alloc.m_star.cwiseAbs().maxCoeff(), 1e-300);
  if (!(std::abs(alloc.risk) > 1e-12 * scale))
    throw NumericError("R(X) = " + std::to_string(alloc.risk) +
                       " is zero: relative risk contributions RA_k / R are undefined");
  return alloc.m_star / alloc.risk;
}

Vector allocate_default_fund(const ScenarioSet& scenarios, double df_total, AllocationRule rule,
                             const std::optional<LossSpec>& loss, double im_level, const SolverOptions& solver) {
  require(df_total >= 0.0, "default fund size must be >= 0");
  if (rule == AllocationRule::im_proportional) return df_total * im_weights(initial_margin(scenarios, im_level));
  if (!loss) throw InputError("the shortfall rule needs a loss function");
  const MonteCarloEstimator est(scenarios, *loss);
  return df_total * shortfall_weights(solve_allocation(est, solver));
}

nlohmann::json DefaultFundReport::to_json() const {
  return {{"members", members},
          {"im_level", im_level},
          {"im", to_std(im)},
          {"df_total", df_total},
          {"weights_im", to_std(weights_im)},
          {"weights_l1", to_std(weights_l1)},
          {"weights_l2", to_std(weights_l2)},
          {"pct_diff_l1_im", to_std(pct_diff_l1_im)},
          {"pct_diff_l1_l2", to_std(pct_diff_l1_l2)},
          {"mean_abs_rel_diff_l1_im", mean_abs_rel_diff_l1_im},
          {"mean_abs_rel_diff_l1_l2", mean_abs_rel_diff_l1_l2},
          {"allocation_l1", alloc_l1.to_json()},
          {"allocation_l2", alloc_l2.to_json()}};
}

std::string DefaultFundReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "member,im,weight_im,weight_l1,weight_l2,pct_diff_l1_im,pct_diff_l1_l2\n";
  for (Eigen::Index k = 0; k < im.size(); ++k) {
    out << csv_field(members[static_cast<std::size_t>(k)]) << ',' << im(k) << ',' << weights_im(k) << ','
        << weights_l1(k) << ',' << weights_l2(k) << ',' << pct_diff_l1_im(k) << ',' << pct_diff_l1_l2(k) << '\n';
  }
  return out.str();
}

DefaultFundReport default_fund_report(const ScenarioSet& scenarios, const DefaultFundOptions& options) {
  const std::size_t d = scenarios.cols();
  DefaultFundReport r;
  r.members = scenarios.labels();
  if (r.members.size() != d) {
    r.members.clear();
    for (std::size_t k = 0; k < d; ++k) r.members.push_back("M" + std::to_string(k + 1));
  }
  r.im_level = options.im_level;
  r.im = initial_margin(scenarios, options.im_level);
  r.df_total = options.df_total ? *options.df_total : cover2(scenarios, r.im);
  require(r.df_total >= 0.0, "default fund size must be >= 0");
  r.weights_im = im_weights(r.im);

  const MonteCarloEstimator est_l1(scenarios, LossSpec::ph1(d, options.gain_weight, options.loss_weight));
  r.alloc_l1 = solve_allocation(est_l1, options.solver);
  r.weights_l1 = shortfall_weights(r.alloc_l1);
  const MonteCarloEstimator est_l2(scenarios, LossSpec::ph2(d, options.gain_weight, options.loss_weight));
  r.alloc_l2 = solve_allocation(est_l2, options.solver);
  r.weights_l2 = shortfall_weights(r.alloc_l2);

  r.pct_diff_l1_im = relative_diff_pct(r.weights_l1, r.weights_im);
  r.pct_diff_l1_l2 = relative_diff_pct(r.weights_l1, r.weights_l2);
  r.mean_abs_rel_diff_l1_im = mean_abs_relative(r.weights_l1, r.weights_im);
  r.mean_abs_rel_diff_l1_l2 = mean_abs_relative(r.weights_l1, r.weights_l2);
  return r;
}

}  // namespace msra
