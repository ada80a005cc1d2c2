#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "ctup/model.hpp"

namespace ctup::crlb {

/// Fisher information of the measurement model, evaluated at the true scene
/// parameters and masked down to the unknowns of the given scenario.
///
/// Column layout (full scenario): [t (2 N_t), s (2 N_a), p (N_t), beta].
/// When the scenario knows the power the p columns are absent; when it knows
/// the PLE the beta column is absent.  Anchor positions are always treated as
/// unknown unless the FIM was built with exact_anchors, in which case the s
/// columns (and the anchor-prior terms) are absent too.
struct FisherInfo {
  Eigen::MatrixXd F;
  model::Scenario scenario;
  int n_targets{0};
  int n_anchors{0};
  bool exact_anchors{false};

  int dim() const { return static_cast<int>(F.rows()); }
  /// First p column, or -1 when power is known.
  int power_offset() const;
  /// Beta column, or -1 when the PLE is known.
  int ple_offset() const;
};

/// Lower bounds on the pooled RMSE of the estimated parameters.
struct CrlbReport {
  double crlb_t_m{0.0};
  std::optional<double> crlb_p_dbm;
  std::optional<double> crlb_beta;
  std::vector<double> per_target_var_m2;
};

/// Assembles F = C^T Q C + sum_i delta_i^-2 R_i^T R_i over the directed
/// target-transmitted links of the scene (anchor-anchor links carry no rows,
/// matching the likelihood).  Per-link sigmas and per-anchor deltas are read
/// from `meas`; the reading values themselves are not used.
/// Throws std::domain_error on a zero-length link.
FisherInfo build_fim(const model::NetworkScene& scene,
                     const model::MeasurementSet& meas,
                     model::Scenario scenario, bool exact_anchors = false);

/// Convenience overload with uniform sigma/delta on every link/anchor.
FisherInfo build_fim(const model::NetworkScene& scene, double sigma_db,
                     double delta_m, model::Scenario scenario,
                     bool exact_anchors = false);

/// Inverts the FIM and extracts the bounds of the report.  No regularization
/// is applied: a singular or ill-conditioned FIM (condition number > 1e12)
/// throws std::runtime_error naming the near-null directions.
CrlbReport crlb(const FisherInfo& fim);

}  // namespace ctup::crlb
