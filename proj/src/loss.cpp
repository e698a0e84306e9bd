#include "msra/loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include "msra/random.hpp"

namespace msra {
namespace {

using nlohmann::json;

double pos(double x) { return x > 0.0 ? x : 0.0; }
double neg(double x) { return x < 0.0 ? -x : 0.0; }
double step(double x) { return x >= 0.0 ? 1.0 : 0.0; }

double epanechnikov(double u, double h) {
  if (h <= 0.0) return 0.0;
  const double t = u / h;
  return std::abs(t) < 1.0 ? 0.75 * (1.0 - t * t) / h : 0.0;
}

const char* family_name(LossFamily f) {
  switch (f) {
    case LossFamily::quadratic_systemic: return "quadratic_systemic";
    case LossFamily::exp_bivariate: return "exp_bivariate";
    case LossFamily::ph1: return "ph1";
    case LossFamily::ph2: return "ph2";
    case LossFamily::c1: return "c1";
    case LossFamily::c2: return "c2";
    case LossFamily::c3: return "c3";
  }
  return "?";
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
}

double number_at(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw InputError("missing '" + key + "' in " + where);
  if (!obj.at(key).is_number()) throw InputError("'" + key + "' in " + where + " must be a number");
  return obj.at(key).get<double>();
}

Kernel kernel_from_json(const json& j) {
  reject_unknown_keys(j, {"type", "beta"}, "loss kernel");
  if (!j.contains("type") || !j.at("type").is_string()) throw InputError("loss kernel needs a string 'type'");
  const auto type = j.at("type").get<std::string>();
  if (type == "piecewise_linear") return Kernel::piecewise_linear(number_at(j, "beta", "piecewise_linear kernel"));
  if (j.contains("beta")) throw InputError("'beta' only applies to the piecewise_linear kernel");
  if (type == "quadratic_plus") return Kernel::quadratic_plus();
  if (type == "exponential") return Kernel::exponential();
  throw InputError("unknown kernel type '" + type + "'");
}

json kernel_to_json(const Kernel& k) {
  json j = {{"type", k.name()}};
  if (k.type == Kernel::Type::piecewise_linear) j["beta"] = k.beta;
  return j;
}

}  // namespace

double Kernel::value(double x) const {
  switch (type) {
    case Type::piecewise_linear: return pos(x) - beta * neg(x);
    case Type::quadratic_plus: return x + 0.5 * pos(x) * pos(x);
    case Type::exponential: return std::expm1(x);
  }
  return 0.0;
}

double Kernel::derivative(double x) const {
  switch (type) {
    case Type::piecewise_linear: return x >= 0.0 ? 1.0 : beta;
    case Type::quadratic_plus: return 1.0 + pos(x);
    case Type::exponential: return std::exp(x);
  }
  return 0.0;
}

double Kernel::second_derivative(double x) const {
  switch (type) {
    case Type::piecewise_linear: throw UnsupportedError("piecewise-linear kernel has no second derivative");
    case Type::quadratic_plus: return step(x);
    case Type::exponential: return std::exp(x);
  }
  return 0.0;
}

std::string Kernel::name() const {
  switch (type) {
    case Type::piecewise_linear: return "piecewise_linear";
    case Type::quadratic_plus: return "quadratic_plus";
    case Type::exponential: return "exponential";
  }
  return "?";
}

LossSpec LossSpec::quadratic_systemic(std::size_t d, double alpha, bool linear_term) {
  LossSpec s;
  s.family_ = LossFamily::quadratic_systemic;
  s.d_ = d;
  s.alpha_ = alpha;
  s.linear_ = linear_term;
  s.validate_parameters();
  return s;
}

LossSpec LossSpec::exp_bivariate(double alpha) {
  LossSpec s;
  s.family_ = LossFamily::exp_bivariate;
  s.d_ = 2;
  s.alpha_ = alpha;
  s.validate_parameters();
  return s;
}

LossSpec LossSpec::ph1(std::size_t d, double gain_weight, double loss_weight) {
  LossSpec s;
  s.family_ = LossFamily::ph1;
  s.d_ = d;
  s.gain_ = gain_weight;
  s.loss_ = loss_weight;
  s.validate_parameters();
  return s;
}

LossSpec LossSpec::ph2(std::size_t d, double gain_weight, double loss_weight) {
  LossSpec s = ph1(d, gain_weight, loss_weight);
  s.family_ = LossFamily::ph2;
  return s;
}

LossSpec LossSpec::c1(std::size_t d, Kernel h) {
  LossSpec s;
  s.family_ = LossFamily::c1;
  s.d_ = d;
  s.kernel_ = h;
  s.validate_parameters();
  return s;
}

LossSpec LossSpec::c2(std::size_t d, Kernel h) {
  LossSpec s = c1(d, h);
  s.family_ = LossFamily::c2;
  return s;
}

LossSpec LossSpec::c3(std::size_t d, double alpha, double beta, Kernel h) {
  LossSpec s;
  s.family_ = LossFamily::c3;
  s.d_ = d;
  s.alpha_ = alpha;
  s.beta_ = beta;
  s.kernel_ = h;
  s.validate_parameters();
  return s;
}

void LossSpec::validate_parameters() const {
  require(d_ >= 1, "loss dimension must be at least 1");
  switch (family_) {
    case LossFamily::quadratic_systemic:
    case LossFamily::exp_bivariate:
      require(std::isfinite(alpha_) && alpha_ >= 0.0, "systemic weight alpha must be >= 0");
      break;
    case LossFamily::ph1:
    case LossFamily::ph2:
      require(gain_ > 0.0 && gain_ <= 1.0, "gain_weight must lie in (0, 1]");
      require(loss_ >= 1.0 && std::isfinite(loss_), "loss_weight must be >= 1");
      require(gain_ < loss_, "gain_weight must be smaller than loss_weight");
      break;
    case LossFamily::c3:
      require(alpha_ >= 0.0 && beta_ >= 0.0 && alpha_ + beta_ > 0.0, "c3 weights must be >= 0 and not both zero");
      [[fallthrough]];
    case LossFamily::c1:
    case LossFamily::c2:
      if (kernel_.type == Kernel::Type::piecewise_linear)
        require(kernel_.beta >= 0.0 && kernel_.beta < 1.0, "piecewise_linear kernel needs 0 <= beta < 1");
      break;
  }
}

std::string LossSpec::name() const { return family_name(family_); }

bool LossSpec::twice_differentiable() const {
  switch (family_) {
    case LossFamily::ph1:
    case LossFamily::ph2: return false;
    case LossFamily::c1:
    case LossFamily::c2:
    case LossFamily::c3: return kernel_.twice_differentiable();
    default: return true;
  }
}

bool LossSpec::has_jump_terms() const {
  return family_ == LossFamily::quadratic_systemic && alpha_ != 0.0 && d_ >= 2;
}

bool LossSpec::kinks_on_coordinate_planes() const {
  switch (family_) {
    case LossFamily::quadratic_systemic:
    case LossFamily::exp_bivariate:
    case LossFamily::ph1:
    case LossFamily::c2: return true;
    case LossFamily::c1: return kernel_.type == Kernel::Type::exponential || d_ == 1;
    case LossFamily::c3: return kernel_.type == Kernel::Type::exponential || alpha_ == 0.0 || d_ == 1;
    case LossFamily::ph2: return d_ == 1;
  }
  return false;
}

bool LossSpec::positively_homogeneous() const {
  switch (family_) {
    case LossFamily::ph1:
    case LossFamily::ph2: return true;
    case LossFamily::c1:
    case LossFamily::c2:
    case LossFamily::c3: return kernel_.type == Kernel::Type::piecewise_linear;
    default: return false;
  }
}

RiskAversionBound LossSpec::risk_aversion_bound() const {
  switch (family_) {
    case LossFamily::quadratic_systemic:
      // (x^+)^2 / 2 >= x - 1/2 covers the variant without the linear term.
      return linear_ ? RiskAversionBound{1.0, 1.0} : RiskAversionBound{1.0, 1.0 + 0.5 * static_cast<double>(d_)};
    case LossFamily::exp_bivariate: return {1.0, 0.0};
    case LossFamily::ph1: return {1.0, 0.0};
    case LossFamily::ph2: return {static_cast<double>(d_), 0.0};
    case LossFamily::c1:
    case LossFamily::c2: return {1.0, 0.0};
    case LossFamily::c3: return {alpha_ + beta_, 0.0};
  }
  return {};
}

void LossSpec::check(std::span<const double> x) const {
  if (x.size() != d_)
    throw InputError("loss of dimension " + std::to_string(d_) + " evaluated at a vector of size " +
                     std::to_string(x.size()));
}

double LossSpec::value(std::span<const double> x) const {
  check(x);
  if (d_ < 2 || family_ == LossFamily::exp_bivariate) return value_sorted(x);
  if (d_ <= 16) {
    std::array<double, 16> buf;
    std::copy(x.begin(), x.end(), buf.begin());
    std::sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(d_));
    return value_sorted({buf.data(), d_});
  }
  std::vector<double> buf(x.begin(), x.end());
  std::sort(buf.begin(), buf.end());
  return value_sorted(buf);
}

double LossSpec::value_sorted(std::span<const double> x) const {
  const std::size_t d = d_;
  switch (family_) {
    case LossFamily::quadratic_systemic: {
      double v = -1.0, sum_pos = 0.0, cross = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double p = pos(x[k]);
        if (linear_) v += x[k];
        v += 0.5 * p * p;
        cross += p * sum_pos;
        sum_pos += p;
      }
      return v + alpha_ * cross;
    }
    case LossFamily::exp_bivariate:
      return (0.5 * std::exp(2.0 * x[0]) + 0.5 * std::exp(2.0 * x[1]) + alpha_ * std::exp(x[0] + x[1]) - 1.0) /
             (1.0 + alpha_);
    case LossFamily::ph1:
    case LossFamily::ph2: {
      auto h = [&](double y) { return loss_ * pos(y) - gain_ * neg(y); };
      double v = 0.0;
      for (std::size_t k = 0; k < d; ++k) v += h(x[k]);
      if (family_ == LossFamily::ph2)
        for (std::size_t k = 0; k < d; ++k)
          for (std::size_t j = k + 1; j < d; ++j) v += h(x[k] + x[j]);
      return v;
    }
    case LossFamily::c1: return kernel_.value(std::accumulate(x.begin(), x.end(), 0.0));
    case LossFamily::c2: {
      double v = 0.0;
      for (double xi : x) v += kernel_.value(xi);
      return v;
    }
    case LossFamily::c3: {
      double v = 0.0;
      for (double xi : x) v += kernel_.value(xi);
      return alpha_ * kernel_.value(std::accumulate(x.begin(), x.end(), 0.0)) + beta_ * v;
    }
  }
  return 0.0;
}

void LossSpec::gradient(std::span<const double> x, std::span<double> g) const {
  check(x);
  require(g.size() == d_, "gradient buffer has the wrong size");
  const std::size_t d = d_;
  switch (family_) {
    case LossFamily::quadratic_systemic: {
      double sum_pos = 0.0;
      for (std::size_t k = 0; k < d; ++k) sum_pos += pos(x[k]);
      for (std::size_t k = 0; k < d; ++k) {
        const double p = pos(x[k]);
        g[k] = (linear_ ? 1.0 : 0.0) + p + alpha_ * step(x[k]) * (sum_pos - p);
      }
      return;
    }
    case LossFamily::exp_bivariate: {
      const double cross = alpha_ * std::exp(x[0] + x[1]);
      g[0] = (std::exp(2.0 * x[0]) + cross) / (1.0 + alpha_);
      g[1] = (std::exp(2.0 * x[1]) + cross) / (1.0 + alpha_);
      return;
    }
    case LossFamily::ph1:
    case LossFamily::ph2: {
      auto dh = [&](double y) { return y >= 0.0 ? loss_ : gain_; };
      for (std::size_t k = 0; k < d; ++k) g[k] = dh(x[k]);
      if (family_ == LossFamily::ph2)
        for (std::size_t k = 0; k < d; ++k)
          for (std::size_t j = k + 1; j < d; ++j) {
            const double s = dh(x[k] + x[j]);
            g[k] += s;
            g[j] += s;
          }
      return;
    }
    case LossFamily::c1: {
      const double s = kernel_.derivative(std::accumulate(x.begin(), x.end(), 0.0));
      std::fill(g.begin(), g.end(), s);
      return;
    }
    case LossFamily::c2:
      for (std::size_t k = 0; k < d; ++k) g[k] = kernel_.derivative(x[k]);
      return;
    case LossFamily::c3: {
      const double s = alpha_ * kernel_.derivative(std::accumulate(x.begin(), x.end(), 0.0));
      for (std::size_t k = 0; k < d; ++k) g[k] = s + beta_ * kernel_.derivative(x[k]);
      return;
    }
  }
}

void LossSpec::add_hessian(std::span<const double> x, Eigen::Ref<Matrix> h) const {
  check(x);
  if (!twice_differentiable())
    throw UnsupportedError("Hessian is not available for the piecewise-linear loss " + name() +
                           "; use the SQP solver path");
  const auto d = static_cast<Eigen::Index>(d_);
  switch (family_) {
    case LossFamily::quadratic_systemic:
      for (Eigen::Index k = 0; k < d; ++k) {
        const double sk = step(x[k]);
        h(k, k) += sk;
        if (alpha_ != 0.0 && sk != 0.0)
          for (Eigen::Index j = 0; j < d; ++j)
            if (j != k) h(k, j) += alpha_ * step(x[j]);
      }
      return;
    case LossFamily::exp_bivariate: {
      const double cross = alpha_ * std::exp(x[0] + x[1]) / (1.0 + alpha_);
      h(0, 0) += 2.0 * std::exp(2.0 * x[0]) / (1.0 + alpha_) + cross;
      h(1, 1) += 2.0 * std::exp(2.0 * x[1]) / (1.0 + alpha_) + cross;
      h(0, 1) += cross;
      h(1, 0) += cross;
      return;
    }
    case LossFamily::c1: {
      h.array() += kernel_.second_derivative(std::accumulate(x.begin(), x.end(), 0.0));
      return;
    }
    case LossFamily::c2:
      for (Eigen::Index k = 0; k < d; ++k) h(k, k) += kernel_.second_derivative(x[k]);
      return;
    case LossFamily::c3: {
      h.array() += alpha_ * kernel_.second_derivative(std::accumulate(x.begin(), x.end(), 0.0));
      for (Eigen::Index k = 0; k < d; ++k) h(k, k) += beta_ * kernel_.second_derivative(x[k]);
      return;
    }
    default: return;
  }
}

void LossSpec::add_jump_hessian(std::span<const double> x, const JumpSmoothing& smoothing,
                                Eigen::Ref<Matrix> h) const {
  if (!has_jump_terms()) return;
  check(x);
  require(smoothing.bandwidth.size() == d_, "jump smoothing needs one bandwidth per component");
  // d/dx_k of alpha * 1{x_k >= 0} * sum_{j != k} x_j^+ has the singular part
  // alpha * delta(x_k) * sum_{j != k} x_j^+.
  double sum_pos = 0.0;
  for (std::size_t k = 0; k < d_; ++k) sum_pos += pos(x[k]);
  for (std::size_t k = 0; k < d_; ++k) {
    const double w = epanechnikov(x[k], smoothing.bandwidth[k]);
    if (w != 0.0) h(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += alpha_ * w * (sum_pos - pos(x[k]));
  }
}

void LossSpec::add_kink_hessian(std::span<const double> x, const JumpSmoothing& smoothing,
                                Eigen::Ref<Matrix> h) const {
  if (twice_differentiable()) return;
  check(x);
  require(smoothing.bandwidth.size() == d_, "kink smoothing needs one bandwidth per component");
  const auto d = static_cast<Eigen::Index>(d_);
  const auto& bw = smoothing.bandwidth;
  auto sum_bandwidth = [&](std::initializer_list<std::size_t> idx) {
    double s = 0.0;
    for (auto i : idx) s += bw[i] * bw[i];
    return std::sqrt(s);
  };
  switch (family_) {
    case LossFamily::ph1:
    case LossFamily::ph2: {
      const double jump = loss_ - gain_;
      for (Eigen::Index k = 0; k < d; ++k) h(k, k) += jump * epanechnikov(x[k], bw[k]);
      if (family_ == LossFamily::ph2)
        for (std::size_t k = 0; k < d_; ++k)
          for (std::size_t j = k + 1; j < d_; ++j) {
            const double w = jump * epanechnikov(x[k] + x[j], sum_bandwidth({k, j}));
            if (w == 0.0) continue;
            const auto ki = static_cast<Eigen::Index>(k), ji = static_cast<Eigen::Index>(j);
            h(ki, ki) += w;
            h(ji, ji) += w;
            h(ki, ji) += w;
            h(ji, ki) += w;
          }
      return;
    }
    case LossFamily::c1:
    case LossFamily::c2:
    case LossFamily::c3: {
      const double jump = 1.0 - kernel_.beta;
      const double sum_weight = family_ == LossFamily::c1 ? 1.0 : (family_ == LossFamily::c3 ? alpha_ : 0.0);
      const double own_weight = family_ == LossFamily::c2 ? 1.0 : (family_ == LossFamily::c3 ? beta_ : 0.0);
      if (sum_weight != 0.0) {
        double s = 0.0, b2 = 0.0;
        for (std::size_t k = 0; k < d_; ++k) {
          s += x[k];
          b2 += bw[k] * bw[k];
        }
        h.array() += sum_weight * jump * epanechnikov(s, std::sqrt(b2));
      }
      if (own_weight != 0.0)
        for (Eigen::Index k = 0; k < d; ++k) h(k, k) += own_weight * jump * epanechnikov(x[k], bw[k]);
      return;
    }
    default: return;
  }
}

double LossSpec::eval(const Vector& x) const { return value({x.data(), static_cast<std::size_t>(x.size())}); }

Vector LossSpec::grad(const Vector& x) const {
  Vector g(static_cast<Eigen::Index>(d_));
  gradient({x.data(), static_cast<std::size_t>(x.size())}, {g.data(), d_});
  return g;
}

Matrix LossSpec::hess(const Vector& x) const {
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(d_), static_cast<Eigen::Index>(d_));
  add_hessian({x.data(), static_cast<std::size_t>(x.size())}, h);
  return h;
}

bool LossSpec::alpha_decomposable() const {
  return family_ == LossFamily::quadratic_systemic || (family_ == LossFamily::c3 && kernel_.twice_differentiable());
}

double LossSpec::systemic_value(std::span<const double> x) const {
  check(x);
  if (family_ == LossFamily::quadratic_systemic) {
    double sum_pos = 0.0, cross = 0.0;
    for (double xi : x) {
      cross += pos(xi) * sum_pos;
      sum_pos += pos(xi);
    }
    return cross;
  }
  if (family_ == LossFamily::c3) return kernel_.value(std::accumulate(x.begin(), x.end(), 0.0));
  throw UnsupportedError("loss " + name() + " has no sum g(x_k) + alpha h(x) decomposition");
}

void LossSpec::systemic_gradient(std::span<const double> x, std::span<double> g) const {
  check(x);
  if (family_ == LossFamily::quadratic_systemic) {
    double sum_pos = 0.0;
    for (double xi : x) sum_pos += pos(xi);
    for (std::size_t k = 0; k < d_; ++k) g[k] = step(x[k]) * (sum_pos - pos(x[k]));
    return;
  }
  if (family_ == LossFamily::c3) {
    std::fill(g.begin(), g.end(), kernel_.derivative(std::accumulate(x.begin(), x.end(), 0.0)));
    return;
  }
  throw UnsupportedError("loss " + name() + " has no sum g(x_k) + alpha h(x) decomposition");
}

LossSpec LossSpec::with_alpha(double alpha) const {
  if (!alpha_decomposable() && family_ != LossFamily::exp_bivariate)
    throw UnsupportedError("loss " + name() + " has no systemic weight");
  LossSpec copy = *this;
  copy.alpha_ = alpha;
  copy.validate_parameters();
  return copy;
}

json LossSpec::to_json() const {
  json params = json::object();
  switch (family_) {
    case LossFamily::quadratic_systemic:
      params = {{"alpha", alpha_}, {"linear", linear_}};
      break;
    case LossFamily::exp_bivariate: params = {{"alpha", alpha_}}; break;
    case LossFamily::ph1:
    case LossFamily::ph2: params = {{"gain_weight", gain_}, {"loss_weight", loss_}}; break;
    case LossFamily::c1:
    case LossFamily::c2: params = {{"kernel", kernel_to_json(kernel_)}}; break;
    case LossFamily::c3: params = {{"alpha", alpha_}, {"beta", beta_}, {"kernel", kernel_to_json(kernel_)}}; break;
  }
  return {{"family", name()}, {"d", d_}, {"params", params}};
}

LossSpec LossSpec::from_json(const json& j) {
  reject_unknown_keys(j, {"family", "d", "params"}, "loss");
  if (!j.contains("family") || !j.at("family").is_string()) throw InputError("loss needs a string 'family'");
  const auto family = j.at("family").get<std::string>();
  std::size_t d = 2;
  if (j.contains("d")) {
    if (!j.at("d").is_number_integer() || j.at("d").get<long long>() < 1)
      throw InputError("loss 'd' must be a positive integer");
    d = j.at("d").get<std::size_t>();
  }
  const json params = j.value("params", json::object());
  if (family == "quadratic_systemic") {
    reject_unknown_keys(params, {"alpha", "linear"}, "quadratic_systemic params");
    const double alpha = params.contains("alpha") ? number_at(params, "alpha", "quadratic_systemic params") : 1.0;
    bool linear = true;
    if (params.contains("linear")) {
      if (!params.at("linear").is_boolean()) throw InputError("'linear' must be a boolean");
      linear = params.at("linear").get<bool>();
    }
    return quadratic_systemic(d, alpha, linear);
  }
  if (family == "exp_bivariate") {
    reject_unknown_keys(params, {"alpha"}, "exp_bivariate params");
    if (d != 2) throw InputError("exp_bivariate is defined for d = 2 only");
    return exp_bivariate(params.contains("alpha") ? number_at(params, "alpha", "exp_bivariate params") : 1.0);
  }
  if (family == "ph1" || family == "ph2") {
    reject_unknown_keys(params, {"gain_weight", "loss_weight"}, family + " params");
    const double gain = params.contains("gain_weight") ? number_at(params, "gain_weight", family) : 0.5;
    const double loss = params.contains("loss_weight") ? number_at(params, "loss_weight", family) : 1.0;
    return family == "ph1" ? ph1(d, gain, loss) : ph2(d, gain, loss);
  }
  if (family == "c1" || family == "c2") {
    reject_unknown_keys(params, {"kernel"}, family + " params");
    if (!params.contains("kernel")) throw InputError(family + " needs a 'kernel'");
    const Kernel k = kernel_from_json(params.at("kernel"));
    return family == "c1" ? c1(d, k) : c2(d, k);
  }
  if (family == "c3") {
    reject_unknown_keys(params, {"alpha", "beta", "kernel"}, "c3 params");
    if (!params.contains("kernel")) throw InputError("c3 needs a 'kernel'");
    return c3(d, number_at(params, "alpha", "c3 params"), number_at(params, "beta", "c3 params"),
              kernel_from_json(params.at("kernel")));
  }
  throw InputError("unknown loss family '" + family + "'");
}

json LossValidationReport::to_json() const {
  json j = {{"monotone", monotone},
            {"convex", convex},
            {"negative_infimum", negative_infimum},
            {"risk_averse", risk_averse},
            {"permutation_invariant", permutation_invariant},
            {"recession_direction_found", recession_direction_found},
            {"unique_allocation_expected", !recession_direction_found},
            {"min_recession_slope", min_recession_slope},
            {"passed", passed()},
            {"notes", notes}};
  if (homogeneity_checked) j["positively_homogeneous"] = positively_homogeneous;
  if (recession_direction_found) j["recession_direction"] = recession_direction;
  return j;
}

LossValidationReport validate_loss(const LossSpec& spec, std::size_t sample_count, std::uint64_t seed) {
  LossValidationReport report;
  const std::size_t d = spec.dimension();
  const auto di = static_cast<Eigen::Index>(d);
  CounterRng rng(seed, 0x105505);
  auto sample = [&](double scale) {
    Vector x(di);
    for (Eigen::Index k = 0; k < di; ++k) x(k) = scale * rng.normal();
    return x;
  };
  auto tol_for = [](double a, double b) { return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); };

  const auto bound = spec.risk_aversion_bound();
  for (std::size_t i = 0; i < sample_count; ++i) {
    const Vector x = sample(2.0);
    Vector y = x;
    for (Eigen::Index k = 0; k < di; ++k) y(k) += std::abs(rng.normal());
    const double lx = spec.eval(x), ly = spec.eval(y);
    if (lx > ly + tol_for(lx, ly)) report.monotone = false;

    const Vector z = sample(2.0);
    const double lz = spec.eval(z);
    for (double w : {0.25, 0.5, 0.75}) {
      const double mix = spec.eval(w * x + (1.0 - w) * z);
      const double chord = w * lx + (1.0 - w) * lz;
      if (mix > chord + tol_for(mix, chord)) report.convex = false;
    }

    if (lx < bound.scale * x.sum() - bound.constant - tol_for(lx, x.sum())) report.risk_averse = false;

    Vector permuted = x;
    for (Eigen::Index k = di - 1; k > 0; --k)
      std::swap(permuted(k), permuted(static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(k + 1))));
    if (spec.eval(permuted) != lx) report.permutation_invariant = false;

    if (spec.positively_homogeneous()) {
      report.homogeneity_checked = true;
      const double lambda = 10.0 * rng.uniform();
      const double scaled = spec.eval(lambda * x);
      if (std::abs(scaled - lambda * lx) > tol_for(scaled, lambda * lx)) report.positively_homogeneous = false;
      else if (i == 0) report.positively_homogeneous = true;
    }
  }
  if (report.homogeneity_checked && sample_count > 0 && !report.positively_homogeneous)
    report.notes.push_back("positive homogeneity violated on samples");

  // Risk-aversion bound along the diagonal rays, where unbounded violations show up first.
  for (double t : {1.0, 10.0, 100.0, 1e3, 1e4}) {
    for (double sign : {-1.0, 1.0}) {
      const Vector x = Vector::Constant(di, sign * t);
      const double lx = spec.eval(x);
      if (std::isfinite(lx) && lx < bound.scale * x.sum() - bound.constant - tol_for(lx, x.sum()))
        report.risk_averse = false;
    }
  }

  for (double t : {1.0, 10.0, 100.0, 1e3}) {
    if (spec.eval(Vector::Constant(di, -t)) < 0.0) {
      report.negative_infimum = true;
      break;
    }
  }
  if (!report.negative_infimum) report.notes.push_back("loss is not negative far in the negative orthant");

  // Zero-sum recession probe.
  if (d >= 2) {
    constexpr double radius = 1e6;
    constexpr double slope_threshold = 1e-6;
    std::vector<Vector> directions;
    Vector canonical = Vector::Zero(di);
    canonical(0) = 1.0;
    canonical(1) = -1.0;
    directions.push_back(canonical.normalized());
    directions.push_back(-canonical.normalized());
    for (int i = 0; i < 32; ++i) {
      Vector u = sample(1.0);
      u.array() -= u.mean();
      if (u.norm() > 1e-12) directions.push_back(u.normalized());
    }
    const std::vector<Vector> bases = {Vector::Zero(di), sample(1.0)};
    report.min_recession_slope = std::numeric_limits<double>::infinity();
    for (const auto& u : directions) {
      double worst = -std::numeric_limits<double>::infinity();
      for (const auto& x : bases) {
        const double far = spec.eval(x + radius * u);
        const double slope = std::isfinite(far) ? (far - spec.eval(x)) / radius : std::numeric_limits<double>::infinity();
        worst = std::max(worst, slope);
      }
      if (worst < report.min_recession_slope) {
        report.min_recession_slope = worst;
        if (worst < slope_threshold) report.recession_direction.assign(u.data(), u.data() + u.size());
      }
    }
    report.recession_direction_found = report.min_recession_slope < slope_threshold;
    if (report.recession_direction_found)
      report.notes.push_back("zero-sum direction of recession found: risk allocation may be non-unique");
  }
  return report;
}

}  // namespace msra
