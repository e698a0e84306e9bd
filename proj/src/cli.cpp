#include "msra/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "msra/log.hpp"
#include "msra/parallel.hpp"

namespace msra::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError("'" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
}

double number(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number()) throw InputError(where + "." + key + " must be a number");
  return v.get<double>();
}

std::uint64_t integer(const json& j, const std::string& key, const std::string& where, std::uint64_t min = 0) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw InputError(where + "." + key + " must be an integer >= " + std::to_string(min));
  return v.get<std::uint64_t>();
}

bool boolean(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_boolean()) throw InputError(where + "." + key + " must be a boolean");
  return v.get<bool>();
}

std::string string(const json& j, const std::string& key, const std::string& where,
                   const std::set<std::string>& choices = {}) {
  const json& v = j.at(key);
  if (!v.is_string()) throw InputError(where + "." + key + " must be a string");
  auto s = v.get<std::string>();
  if (!choices.empty() && !choices.count(s)) {
    std::string list;
    for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
    throw InputError(where + "." + key + " must be one of " + list + " (got '" + s + "')");
  }
  return s;
}

std::vector<double> numbers(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_array()) throw InputError(where + "." + key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw InputError(where + "." + key + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Vector vector(const json& j, const std::string& key, const std::string& where) {
  const auto v = numbers(j, key, where);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix matrix(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  const std::string name = where + "." + key;
  if (!v.is_array() || v.empty()) throw InputError(name + " must be a non-empty array of rows");
  const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
  Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || v[r].size() != cols) throw InputError(name + " must be rectangular");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!v[r][c].is_number()) throw InputError(name + " must hold numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
    }
  }
  return m;
}

std::vector<std::string> strings(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_array()) throw InputError(where + "." + key + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw InputError(where + "." + key + " must be an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

ModelConfig parse_model(const json& j) {
  if (!j.is_object() || !j.contains("type")) throw InputError("model needs a 'type'");
  ModelConfig m;
  m.type = string(j, "type", "model", {"gaussian", "student_copula", "synthetic_book"});
  if (m.type == "gaussian") {
    reject_unknown(j, {"type", "mean", "covariance"}, "model");
    if (!j.contains("covariance")) throw InputError("gaussian model needs 'covariance'");
    m.gaussian.covariance = matrix(j, "covariance", "model");
    m.gaussian.mean =
        j.contains("mean") ? vector(j, "mean", "model") : Vector::Zero(m.gaussian.covariance.rows()).eval();
    m.gaussian.validate();
  } else if (m.type == "student_copula") {
    reject_unknown(j, {"type", "correlation", "copula_dof", "marginal_dof", "fudge", "spot", "positions",
                       "positions_file"},
                   "model");
    for (const char* key : {"correlation", "marginal_dof", "fudge", "spot"})
      if (!j.contains(key)) throw InputError(std::string("student_copula model needs '") + key + "'");
    m.copula.correlation = matrix(j, "correlation", "model");
    if (j.contains("copula_dof")) m.copula.copula_dof = number(j, "copula_dof", "model");
    m.copula.marginal_dof = vector(j, "marginal_dof", "model");
    m.copula.fudge = vector(j, "fudge", "model");
    m.copula.spot = vector(j, "spot", "model");
    if (j.contains("positions_file") == j.contains("positions"))
      throw InputError("student_copula model needs exactly one of 'positions' and 'positions_file'");
    if (j.contains("positions_file")) {
      m.copula.positions = load_positions(string(j, "positions_file", "model"));
    } else {
      const json& p = j.at("positions");
      reject_unknown(p, {"members", "tickers", "matrix"}, "model.positions");
      m.copula.positions.matrix = matrix(p, "matrix", "model.positions");
      if (p.contains("members")) m.copula.positions.members = strings(p, "members", "model.positions");
      if (p.contains("tickers")) m.copula.positions.tickers = strings(p, "tickers", "model.positions");
    }
    m.copula.validate();
  } else {
    reject_unknown(j, {"type", "members", "underlyings", "book_seed", "copula_dof"}, "model");
    const std::size_t members = j.contains("members") ? integer(j, "members", "model", 2) : 10;
    const std::size_t underlyings = j.contains("underlyings") ? integer(j, "underlyings", "model", 1) : 5;
    const std::uint64_t book_seed = j.contains("book_seed") ? integer(j, "book_seed", "model") : 1;
    const double dof = j.contains("copula_dof") ? number(j, "copula_dof", "model") : 6.0;
    m.copula = synthetic_book(members, underlyings, book_seed, dof);
    m.copula.validate();
  }
  return m;
}

SolverConfig parse_solver(const json& j) {
  reject_unknown(j, {"n_scenarios", "seed", "tol", "method", "surrogate", "backend", "max_iterations", "nonnegative"},
                 "solver");
  SolverConfig s;
  if (j.contains("n_scenarios")) s.n_scenarios = integer(j, "n_scenarios", "solver", 1);
  if (j.contains("seed")) s.seed = integer(j, "seed", "solver");
  if (j.contains("tol") && !j.at("tol").is_null()) {
    s.tol = number(j, "tol", "solver");
    require(*s.tol > 0.0, "solver.tol must be positive");
  }
  if (j.contains("method")) s.method = parse_solver_method(string(j, "method", "solver", {"auto", "kkt", "sqp"}));
  if (j.contains("surrogate")) {
    const json& v = j.at("surrogate");
    if (v.is_string() && v.get<std::string>() == "off") {
      s.surrogate.reset();
    } else if (v.is_number_integer() && v.get<long long>() >= 2) {
      s.surrogate = v.get<std::size_t>();
    } else {
      throw InputError("solver.surrogate must be \"off\" or an integer node count >= 2");
    }
  }
  if (j.contains("backend")) s.backend = string(j, "backend", "solver", {"monte_carlo", "quadrature"});
  if (j.contains("max_iterations")) s.max_iterations = integer(j, "max_iterations", "solver", 1);
  if (j.contains("nonnegative")) s.nonnegative = boolean(j, "nonnegative", "solver");
  return s;
}

SensitivityConfig parse_sensitivity(const json& j) {
  reject_unknown(j, {"shock", "method", "step", "alpha"}, "sensitivity");
  SensitivityConfig s;
  if (j.contains("shock")) {
    const json& k = j.at("shock");
    reject_unknown(k, {"type", "component", "mean", "sd", "seed", "path"}, "sensitivity.shock");
    if (k.contains("type"))
      s.shock.type = string(k, "type", "sensitivity.shock", {"self", "independent_normal", "file"});
    if (k.contains("component")) s.shock.component = integer(k, "component", "sensitivity.shock", 1);
    if (k.contains("mean")) s.shock.mean = number(k, "mean", "sensitivity.shock");
    if (k.contains("sd")) s.shock.sd = number(k, "sd", "sensitivity.shock");
    if (k.contains("seed")) s.shock.seed = integer(k, "seed", "sensitivity.shock");
    if (k.contains("path")) s.shock.path = string(k, "path", "sensitivity.shock");
    require(s.shock.sd >= 0.0, "sensitivity.shock.sd must be >= 0");
    if (s.shock.type == "file" && s.shock.path.empty()) throw InputError("a file shock needs 'path'");
  }
  if (j.contains("method"))
    s.method = string(j, "method", "sensitivity", {"linear_system", "finite_difference", "both"});
  if (j.contains("step")) s.step = number(j, "step", "sensitivity");
  require(s.step > 0.0, "sensitivity.step must be positive");
  if (j.contains("alpha")) s.alpha = boolean(j, "alpha", "sensitivity");
  return s;
}

DefaultFundConfig parse_default_fund(const json& j) {
  reject_unknown(j, {"im_level", "df_total", "gain_weight", "loss_weight"}, "default_fund");
  DefaultFundConfig d;
  if (j.contains("im_level")) d.im_level = number(j, "im_level", "default_fund");
  if (j.contains("df_total") && !j.at("df_total").is_null()) d.df_total = number(j, "df_total", "default_fund");
  if (j.contains("gain_weight")) d.gain_weight = number(j, "gain_weight", "default_fund");
  if (j.contains("loss_weight")) d.loss_weight = number(j, "loss_weight", "default_fund");
  require(d.im_level > 0.0 && d.im_level < 1.0, "default_fund.im_level must lie in (0, 1)");
  require(!d.df_total || *d.df_total >= 0.0, "default_fund.df_total must be >= 0");
  require(d.gain_weight > 0.0 && d.gain_weight <= 1.0 && d.loss_weight >= 1.0,
          "default_fund weights need 0 < gain_weight <= 1 <= loss_weight");
  return d;
}

PlotConfig parse_plots(const json& j) {
  reject_unknown(j, {"src_grid", "alpha_profile"}, "plots");
  PlotConfig p;
  if (j.contains("src_grid")) {
    const json& g = j.at("src_grid");
    if (g.is_boolean()) {
      if (!g.get<bool>()) p.src_grid.reset();
    } else {
      reject_unknown(g, {"rho", "sigma1_max", "points", "sigma2", "alpha"}, "plots.src_grid");
      SrcGridConfig s;
      if (g.contains("rho")) s.rho = numbers(g, "rho", "plots.src_grid");
      if (g.contains("sigma1_max")) s.sigma1_max = number(g, "sigma1_max", "plots.src_grid");
      if (g.contains("points")) s.points = integer(g, "points", "plots.src_grid", 2);
      if (g.contains("sigma2")) s.sigma2 = number(g, "sigma2", "plots.src_grid");
      if (g.contains("alpha")) s.alpha = number(g, "alpha", "plots.src_grid");
      p.src_grid = s;
    }
  }
  if (j.contains("alpha_profile")) {
    const json& a = j.at("alpha_profile");
    if (a.is_boolean()) {
      if (a.get<bool>()) p.alpha_profile = AlphaProfileConfig{};
    } else {
      reject_unknown(a, {"rho", "alpha", "sigma", "n_scenarios", "seed"}, "plots.alpha_profile");
      AlphaProfileConfig s;
      if (a.contains("rho")) s.rho = numbers(a, "rho", "plots.alpha_profile");
      if (a.contains("alpha")) s.alpha = number(a, "alpha", "plots.alpha_profile");
      if (a.contains("sigma")) s.sigma = number(a, "sigma", "plots.alpha_profile");
      if (a.contains("n_scenarios")) s.n_scenarios = integer(a, "n_scenarios", "plots.alpha_profile", 100);
      if (a.contains("seed")) s.seed = integer(a, "seed", "plots.alpha_profile");
      p.alpha_profile = s;
    }
  }
  return p;
}

// Labels and diagnostics travel next to the binary container in <file>.json.
fs::path metadata_path(const fs::path& scenarios) { return fs::path(scenarios.string() + ".json"); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string format_number(double x) {
  std::ostringstream s;
  s << std::setprecision(12) << x;
  return s.str();
}

ScenarioSet simulate_model(const RunConfig& c) {
  if (!c.model) throw InputError("no scenarios: pass --scenarios or configure a 'model'");
  if (c.model->type == "gaussian") return simulate_gaussian(c.model->gaussian, c.solver.n_scenarios, c.solver.seed);
  return simulate_student_copula(c.model->copula, c.solver.n_scenarios, c.solver.seed);
}

ScenarioSet obtain_scenarios(const RunConfig& c, const std::string& path) {
  if (path.empty()) return simulate_model(c);
  ScenarioSet set = read_scenarios(path);
  const fs::path meta = metadata_path(path);
  if (fs::exists(meta)) {
    json j;
    try {
      j = json::parse(read_text(meta));
      if (j.contains("labels")) set.set_labels(j.at("labels").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw InputError("malformed scenario metadata '" + meta.string() + "': " + e.what());
    }
  }
  return set;
}

const LossSpec& require_loss(const RunConfig& c, std::size_t d) {
  if (!c.loss) throw InputError("this command needs a 'loss' section");
  if (c.loss->dimension() != d)
    throw InputError("loss dimension " + std::to_string(c.loss->dimension()) + " does not match the " +
                     std::to_string(d) + " scenario columns");
  return *c.loss;
}

SolverOptions solver_options(const SolverConfig& s) {
  SolverOptions o;
  o.method = s.method;
  o.tol = s.tol;
  o.max_iterations = s.max_iterations;
  o.nonnegative = s.nonnegative;
  return o;
}

struct Context {
  RunConfig config;
  std::string scenarios_path;
  std::string allocation_path;
  fs::path out_dir;
  std::string format;
  std::ostream& out;
  std::ostream& err;
};

void emit(Context& ctx, const std::string& name, const std::string& text) {
  write_text(ctx.out_dir / name, text);
  log::write(log::Level::info, "wrote " + (ctx.out_dir / name).string());
}

int cmd_simulate(Context& ctx) {
  if (!ctx.config.model) throw InputError("simulate needs a 'model' section");
  const ScenarioSet set = simulate_model(ctx.config);
  for (const auto& d : set.diagnostics()) ctx.err << "warning: " << d << '\n';
  const fs::path file = ctx.out_dir / "scenarios.msra";
  write_scenarios(set, file);
  write_text(metadata_path(file),
             json{{"labels", set.labels()}, {"diagnostics", set.diagnostics()}, {"model_tag", set.model_tag()}}
                 .dump(2));
  const auto stats = summarize(set);
  json columns = json::array();
  std::ostringstream csv;
  csv << "column,mean,stddev,min,max\n";
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const std::string label = set.labels().empty() ? "X" + std::to_string(k + 1) : set.labels()[k];
    columns.push_back({{"label", label},
                       {"mean", stats[k].mean},
                       {"stddev", stats[k].stddev},
                       {"min", stats[k].min},
                       {"max", stats[k].max}});
    csv << label << ',' << format_number(stats[k].mean) << ',' << format_number(stats[k].stddev) << ','
        << format_number(stats[k].min) << ',' << format_number(stats[k].max) << '\n';
  }
  const json summary = {{"file", file.string()},     {"rows", set.rows()},
                        {"cols", set.cols()},        {"seed", set.seed()},
                        {"model_tag", set.model_tag()}, {"columns", columns},
                        {"diagnostics", set.diagnostics()}};
  emit(ctx, "summary.json", summary.dump(2));
  if (ctx.format == "csv") {
    write_scenarios_csv(set, ctx.out_dir / "scenarios.csv");
    emit(ctx, "summary.csv", csv.str());
    ctx.out << csv.str();
  } else {
    ctx.out << summary.dump(2) << '\n';
  }
  return 0;
}

std::string allocation_csv(const AllocationResult& a, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "component,m_star,allocation_se\n";
  for (Eigen::Index k = 0; k < a.m_star.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    s << (ku < labels.size() ? labels[ku] : "X" + std::to_string(k + 1)) << ',' << format_number(a.m_star(k))
      << ',' << (a.allocation_se.size() ? format_number(a.allocation_se(k)) : "") << '\n';
  }
  return s.str();
}

struct Solved {
  AllocationResult result;
  double wall_time_ms = 0.0;
  std::optional<double> surrogate_error;
};

Solved solve(const RunConfig& c, const ScenarioSet* set, const LossSpec& loss) {
  std::unique_ptr<ConstraintModel> base;
  if (c.solver.backend == "quadrature") {
    if (!c.model || c.model->type != "gaussian")
      throw InputError("the quadrature backend needs a gaussian 'model' section");
    base = std::make_unique<QuadratureOracle>(c.model->gaussian, loss);
  } else {
    base = std::make_unique<MonteCarloEstimator>(*set, loss);
  }
  Solved s;
  const auto start = std::chrono::steady_clock::now();
  if (c.solver.surrogate) {
    const SurrogateConstraint surrogate(*base, *c.solver.surrogate);
    s.surrogate_error = surrogate.surrogate().error_estimate();
    s.result = solve_allocation(surrogate, solver_options(c.solver));
  } else {
    s.result = solve_allocation(*base, solver_options(c.solver));
  }
  s.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return s;
}

int cmd_allocate(Context& ctx) {
  const RunConfig& c = ctx.config;
  std::optional<ScenarioSet> set;
  std::size_t d = 0;
  if (c.solver.backend == "quadrature") {
    if (!c.model || c.model->type != "gaussian")
      throw InputError("the quadrature backend needs a gaussian 'model' section");
    d = c.model->gaussian.dimension();
  } else {
    set = obtain_scenarios(c, ctx.scenarios_path);
    d = set->cols();
  }
  const LossSpec& loss = require_loss(c, d);
  const Solved s = solve(c, set ? &*set : nullptr, loss);
  json j = s.result.to_json();
  j["wall_time_ms"] = s.wall_time_ms;
  j["loss"] = loss.to_json();
  j["backend"] = c.solver.backend;
  if (set) {
    j["n_scenarios"] = set->rows();
    j["seed"] = set->seed();
    j["labels"] = set->labels();
  }
  if (s.surrogate_error) j["surrogate_error"] = *s.surrogate_error;
  emit(ctx, "allocation.json", j.dump(2));
  if (ctx.format == "csv") {
    const std::string csv = allocation_csv(s.result, set ? set->labels() : std::vector<std::string>{});
    emit(ctx, "allocation.csv", csv);
    ctx.out << csv;
  } else {
    ctx.out << j.dump(2) << '\n';
  }
  return 0;
}

AllocationResult read_allocation(const std::string& path, std::size_t d) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InputError("malformed allocation file '" + path + "': " + e.what());
  }
  if (!j.is_object() || !j.contains("m_star") || !j.contains("lambda_star"))
    throw InputError("allocation file needs 'm_star' and 'lambda_star'");
  AllocationResult a;
  a.m_star = vector(j, "m_star", "allocation");
  a.lambda_star = number(j, "lambda_star", "allocation");
  if (static_cast<std::size_t>(a.m_star.size()) != d)
    throw InputError("allocation dimension does not match the scenario columns");
  a.risk = a.m_star.sum();
  a.method = "file";
  return a;
}

ScenarioSet make_shock(const ShockConfig& shock, const ScenarioSet& set) {
  if (shock.type == "self") return set;
  if (shock.type == "file") {
    ScenarioSet y = read_scenarios(shock.path);
    if (y.rows() != set.rows() || y.cols() != set.cols())
      throw InputError("shock file '" + shock.path + "' is not aligned with the loss scenarios");
    return y;
  }
  if (shock.component > set.cols())
    throw InputError("shock component " + std::to_string(shock.component) + " exceeds the " +
                     std::to_string(set.cols()) + " scenario columns");
  return independent_normal_shock(set.rows(), set.cols(), shock.component - 1, shock.mean, shock.sd, shock.seed);
}

json shock_json(const ShockConfig& s) {
  json j = {{"type", s.type}};
  if (s.type == "independent_normal") {
    j["component"] = s.component;
    j["mean"] = s.mean;
    j["sd"] = s.sd;
    j["seed"] = s.seed;
  } else if (s.type == "file") {
    j["path"] = s.path;
  }
  return j;
}

int cmd_sensitivity(Context& ctx) {
  const RunConfig& c = ctx.config;
  if (c.solver.backend != "monte_carlo") throw UnsupportedError("sensitivities need the monte_carlo backend");
  const ScenarioSet set = obtain_scenarios(c, ctx.scenarios_path);
  const LossSpec& loss = require_loss(c, set.cols());
  const MonteCarloEstimator est(set, loss);
  const AllocationResult alloc = ctx.allocation_path.empty() ? solve(c, &set, loss).result
                                                             : read_allocation(ctx.allocation_path, set.cols());
  const ScenarioSet shock = make_shock(c.sensitivity.shock, set);
  json j = {{"allocation", alloc.to_json()}, {"shock", shock_json(c.sensitivity.shock)}, {"loss", loss.to_json()}};
  std::optional<SensitivityResult> linear, fd;
  if (c.sensitivity.method != "finite_difference") {
    linear = shock_sensitivity(est, alloc, shock);
    j["linear_system"] = linear->to_json();
  }
  if (c.sensitivity.method != "linear_system") {
    SolverOptions opts = solver_options(c.solver);
    fd = finite_difference_sensitivity(set, shock, loss, c.sensitivity.step, opts);
    j["finite_difference"] = fd->to_json();
  }
  if (c.sensitivity.alpha) j["alpha"] = alpha_sensitivity(est, alloc).to_json();
  if (c.plots.src_grid) emit(ctx, "src_grid.csv", src_grid_csv(*c.plots.src_grid));
  if (c.plots.alpha_profile) emit(ctx, "alpha_profile.csv", alpha_profile_csv(*c.plots.alpha_profile));
  emit(ctx, "sensitivity.json", j.dump(2));
  if (ctx.format == "csv") {
    std::ostringstream csv;
    csv << "component,marginal_alloc_linear,marginal_alloc_fd\n";
    for (std::size_t k = 0; k < set.cols(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      csv << (k < set.labels().size() ? set.labels()[k] : "X" + std::to_string(k + 1)) << ','
          << (linear ? format_number(linear->marginal_alloc(ki)) : "") << ','
          << (fd ? format_number(fd->marginal_alloc(ki)) : "") << '\n';
    }
    emit(ctx, "sensitivity.csv", csv.str());
    ctx.out << csv.str();
  } else {
    ctx.out << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_default_fund(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ScenarioSet set = obtain_scenarios(c, ctx.scenarios_path);
  DefaultFundOptions o;
  o.im_level = c.default_fund.im_level;
  o.df_total = c.default_fund.df_total;
  o.gain_weight = c.default_fund.gain_weight;
  o.loss_weight = c.default_fund.loss_weight;
  o.solver = solver_options(c.solver);
  const DefaultFundReport r = default_fund_report(set, o);
  json j = r.to_json();
  j["n_scenarios"] = set.rows();
  j["seed"] = set.seed();
  const std::string csv = r.to_csv();
  emit(ctx, "default_fund.json", j.dump(2));
  emit(ctx, "default_fund.csv", csv);
  if (ctx.format == "csv")
    ctx.out << csv;
  else
    ctx.out << j.dump(2) << '\n';
  return 0;
}

int cmd_validate_loss(Context& ctx) {
  if (!ctx.config.loss) throw InputError("validate-loss needs a 'loss' section");
  const LossValidationReport report = validate_loss(*ctx.config.loss);
  json j = report.to_json();
  j["loss"] = ctx.config.loss->to_json();
  emit(ctx, "validation.json", j.dump(2));
  if (ctx.format == "csv") {
    std::ostringstream csv;
    csv << "check,result\n";
    for (const char* key : {"monotone", "convex", "negative_infimum", "risk_averse", "permutation_invariant",
                            "recession_direction_found", "passed"})
      csv << key << ',' << (j.at(key).get<bool>() ? "true" : "false") << '\n';
    ctx.out << csv.str();
  } else {
    ctx.out << j.dump(2) << '\n';
  }
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return static_cast<int>(ExitCode::config);
    case ErrorKind::numeric: return static_cast<int>(ExitCode::numeric);
    case ErrorKind::io: return static_cast<int>(ExitCode::io);
  }
  return static_cast<int>(ExitCode::numeric);
}

}  // namespace

RunConfig parse_config(const json& j) {
  reject_unknown(j, {"model", "loss", "solver", "sensitivity", "default_fund", "plots", "output", "threads"},
                 "config");
  RunConfig c;
  if (j.contains("model")) c.model = parse_model(j.at("model"));
  if (j.contains("loss")) c.loss = LossSpec::from_json(j.at("loss"));
  if (j.contains("solver")) c.solver = parse_solver(j.at("solver"));
  if (j.contains("sensitivity")) c.sensitivity = parse_sensitivity(j.at("sensitivity"));
  if (j.contains("default_fund")) c.default_fund = parse_default_fund(j.at("default_fund"));
  if (j.contains("plots")) c.plots = parse_plots(j.at("plots"));
  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, {"dir", "format"}, "output");
    if (o.contains("dir")) c.output.dir = string(o, "dir", "output");
    if (o.contains("format")) c.output.format = string(o, "format", "output", {"json", "csv"});
  }
  if (j.contains("threads")) c.threads = integer(j, "threads", "config", 1);
  if (c.model && c.loss) {
    const std::size_t d = c.model->type == "gaussian" ? c.model->gaussian.dimension() : c.model->copula.members();
    if (d != c.loss->dimension())
      throw InputError("loss dimension " + std::to_string(c.loss->dimension()) + " does not match the model's " +
                       std::to_string(d) + " components");
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  const std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

std::string src_grid_csv(const SrcGridConfig& grid) {
  require(grid.points >= 2, "SRC grid needs at least two points");
  std::ostringstream s;
  s << "sigma1";
  for (double rho : grid.rho) s << ",rho_" << format_number(rho);
  s << '\n';
  for (std::size_t i = 0; i < grid.points; ++i) {
    const double sigma1 = grid.sigma1_max * static_cast<double>(i) / static_cast<double>(grid.points - 1);
    s << format_number(sigma1);
    for (double rho : grid.rho) s << ',' << format_number(src_closed_form(rho, sigma1, grid.sigma2, grid.alpha));
    s << '\n';
  }
  return s.str();
}

std::string alpha_profile_csv(const AlphaProfileConfig& profile) {
  std::ostringstream s;
  s << "rho,d_alloc_1,d_alloc_2,d_alloc_3,d_risk,d_risk_se\n";
  const double v = profile.sigma * profile.sigma;
  const LossSpec loss = LossSpec::quadratic_systemic(3, profile.alpha, false);
  for (double rho : profile.rho) {
    GaussianModel g{Vector::Zero(3), Matrix::Zero(3, 3)};
    g.covariance << v, rho * v, 0.0, rho * v, v, 0.0, 0.0, 0.0, v;
    const ScenarioSet set = simulate_gaussian(g, profile.n_scenarios, profile.seed);
    const MonteCarloEstimator est(set, loss);
    const AlphaSensitivity a = alpha_sensitivity(est, solve_allocation(est));
    s << format_number(rho) << ',' << format_number(a.d_alloc(0)) << ',' << format_number(a.d_alloc(1)) << ','
      << format_number(a.d_alloc(2)) << ',' << format_number(a.d_risk) << ',' << format_number(a.d_risk_se) << '\n';
  }
  return s.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multivariate shortfall risk allocation"};
  app.name("msra");
  app.require_subcommand(1);
  std::string config_path, scenarios_path, out_dir, format, allocation_path;
  std::size_t threads = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--scenarios", scenarios_path, "binary scenario file (skips simulation)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  };
  CLI::App* simulate = app.add_subcommand("simulate", "simulate and store a scenario set");
  CLI::App* allocate = app.add_subcommand("allocate", "compute R(X) and the risk allocation");
  CLI::App* sensitivity = app.add_subcommand("sensitivity", "marginal risk contributions for a shock");
  CLI::App* default_fund = app.add_subcommand("default-fund", "IM and shortfall default-fund weights");
  CLI::App* validate = app.add_subcommand("validate-loss", "check loss function axioms");
  for (CLI::App* sub : {simulate, allocate, sensitivity, default_fund, validate}) common(sub);
  sensitivity->add_option("--allocation", allocation_path, "allocation JSON to reuse")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  fs::path resolved_out;
  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (threads) config.threads = threads;
    if (config.threads) parallel::set_thread_count(*config.threads);
    Context ctx{std::move(config), scenarios_path, allocation_path, {}, {}, out, err};
    ctx.out_dir = out_dir.empty() ? fs::path(ctx.config.output.dir) : fs::path(out_dir);
    ctx.format = format.empty() ? ctx.config.output.format : format;
    resolved_out = ctx.out_dir;
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + ctx.out_dir.string() + "': " + ec.message());
    if (*simulate) return cmd_simulate(ctx);
    if (*allocate) return cmd_allocate(ctx);
    if (*sensitivity) return cmd_sensitivity(ctx);
    if (*default_fund) return cmd_default_fund(ctx);
    return cmd_validate_loss(ctx);
  } catch (const SolverError& e) {
    const std::string dump = e.to_json().dump(2);
    err << "error: " << e.what() << '\n' << dump << '\n';
    if (!resolved_out.empty()) {
      std::ofstream f(resolved_out / "error.json");
      f << dump << '\n';
    }
    return static_cast<int>(ExitCode::numeric);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numeric);
  }
}

}  // namespace msra::cli
