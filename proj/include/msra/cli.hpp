#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msra/defaultfund.hpp"
#include "msra/sensitivity.hpp"

namespace msra::cli {

enum class ExitCode : int { ok = 0, config = 1, numeric = 2, io = 3 };

struct ModelConfig {
  std::string type;  // gaussian | student_copula | synthetic_book
  GaussianModel gaussian;
  StudentCopulaModel copula;
};

struct SolverConfig {
  std::size_t n_scenarios = 100000;
  std::uint64_t seed = 42;
  std::optional<double> tol;
  SolverMethod method = SolverMethod::automatic;
  std::optional<std::size_t> surrogate;  // Chebyshev nodes per axis, off when empty
  std::string backend = "monte_carlo";   // monte_carlo | quadrature
  std::size_t max_iterations = 200;
  bool nonnegative = false;
};

struct ShockConfig {
  std::string type = "self";  // self | independent_normal | file
  std::size_t component = 1;  // 1-based
  double mean = 0.0;
  double sd = 1.0;
  std::uint64_t seed = 7;
  std::string path;
};

struct SensitivityConfig {
  ShockConfig shock;
  std::string method = "linear_system";  // linear_system | finite_difference | both
  double step = 1e-3;
  bool alpha = false;
};

struct DefaultFundConfig {
  double im_level = 0.99;
  std::optional<double> df_total;
  double gain_weight = 0.5;
  double loss_weight = 1.0;
};

struct SrcGridConfig {
  std::vector<double> rho{-0.9, -0.5, -0.2, 0.0, 0.2, 0.5, 0.9};
  double sigma1_max = 3.0;
  std::size_t points = 31;
  double sigma2 = 1.0;
  double alpha = 1.0;
};

/// Sweep of alpha sensitivities over rho for N(0, [[s^2, rho s^2, 0], [rho s^2, s^2, 0], [0, 0, s^2]]).
struct AlphaProfileConfig {
  std::vector<double> rho{-0.9, -0.5, 0.0, 0.5, 0.9};
  double alpha = 0.5;
  double sigma = 1.0;
  std::size_t n_scenarios = 200000;
  std::uint64_t seed = 1;
};

struct PlotConfig {
  std::optional<SrcGridConfig> src_grid = SrcGridConfig{};
  std::optional<AlphaProfileConfig> alpha_profile;
};

struct OutputConfig {
  std::string dir = ".";
  std::string format = "json";  // json | csv
};

struct RunConfig {
  std::optional<ModelConfig> model;
  std::optional<LossSpec> loss;
  SolverConfig solver;
  SensitivityConfig sensitivity;
  DefaultFundConfig default_fund;
  PlotConfig plots;
  OutputConfig output;
  std::optional<std::size_t> threads;
};

/// Strict parser: unknown keys, wrong types and out-of-range values throw InputError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// SRC closed form on sigma1 in [0, sigma1_max] for each rho; columns sigma1, rho_<value>...
std::string src_grid_csv(const SrcGridConfig& grid);
/// Columns rho, d_alloc_1, d_alloc_2, d_alloc_3, d_risk, d_risk_se.
std::string alpha_profile_csv(const AlphaProfileConfig& profile);

/// Entry point of the msra executable. Results go to `out` and to files in the
/// output directory; diagnostics go to `err`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msra::cli
