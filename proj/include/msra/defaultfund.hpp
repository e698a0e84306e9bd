#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msra/solver.hpp"

namespace msra {

/// Per-member empirical value at risk: the level-quantile of each loss column
/// with linear interpolation at the 0-based position (n - 1) * level.
/// Requires level in (0, 1) and at least 100 scenarios.
Vector initial_margin(const ScenarioSet& scenarios, double level);

/// Cover-2 size: the worst scenario's sum of the two largest excess losses
/// (X_{s,k} - im_k)^+ over members.
double cover2(const ScenarioSet& scenarios, const Vector& im);

/// im_k / sum(im).
Vector im_weights(const Vector& im);

/// RA_k / R. Throws NumericError when R is zero relative to the allocation.
Vector shortfall_weights(const AllocationResult& alloc);

enum class AllocationRule { im_proportional, shortfall };

struct DefaultFundOptions {
  double im_level = 0.99;
  /// Fund size; defaults to cover2 at the IM level.
  std::optional<double> df_total;
  /// Weights of the piecewise-linear losses: gain_weight on profits, loss_weight on losses.
  double gain_weight = 0.5;
  double loss_weight = 1.0;
  SolverOptions solver;
};

/// Member contributions to a default fund of size df_total.
/// im_proportional ignores `loss`; shortfall solves the allocation problem for it.
Vector allocate_default_fund(const ScenarioSet& scenarios, double df_total, AllocationRule rule,
                             const std::optional<LossSpec>& loss = std::nullopt, double im_level = 0.99,
                             const SolverOptions& solver = {});

struct DefaultFundReport {
  std::vector<std::string> members;
  double im_level = 0.99;
  Vector im;
  double df_total = 0.0;
  Vector weights_im;
  Vector weights_l1;  // shortfall weights under the separable piecewise-linear loss
  Vector weights_l2;  // shortfall weights under the pairwise piecewise-linear loss
  Vector pct_diff_l1_im;  // 100 (w_l1 - w_im) / w_im
  Vector pct_diff_l1_l2;  // 100 (w_l1 - w_l2) / w_l2
  double mean_abs_rel_diff_l1_im = 0.0;
  double mean_abs_rel_diff_l1_l2 = 0.0;
  AllocationResult alloc_l1;
  AllocationResult alloc_l2;

  nlohmann::json to_json() const;
  /// Columns: member, im, weight_im, weight_l1, weight_l2, pct_diff_l1_im, pct_diff_l1_l2.
  std::string to_csv() const;
};

DefaultFundReport default_fund_report(const ScenarioSet& scenarios, const DefaultFundOptions& options = {});

}  // namespace msra
