#include "msra/random.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace msra {

double CounterRng::normal() { return dist::normal_quantile(uniform()); }

namespace dist {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); }

double student_cdf(double x, double dof) {
  return boost::math::cdf(boost::math::students_t_distribution<double>(dof), x);
}

double student_quantile(double u, double dof) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(dof), u);
}

double chi_square_quantile(double u, double dof) { return 2.0 * boost::math::gamma_p_inv(0.5 * dof, u); }

}  // namespace dist
}  // namespace msra
