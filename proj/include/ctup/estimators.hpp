#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "ctup/conic.hpp"
#include "ctup/model.hpp"

namespace ctup::estimators {

struct EstimatorSettings {
  conic::SolverSettings solver{};
  /// Encode the per-link residual constraints as the paper's diagonal LMI
  /// instead of plain equalities.
  bool residual_lmi{false};
};

/// Directed target-transmit link in the canonical order used throughout the
/// estimators: for each target j, first its anchor links (order of A_j), then
/// its target links (order of T_j).
struct LinkRef {
  model::NodeId tx;
  model::NodeId rx;
};

std::vector<LinkRef> enumerate_links(const model::NetworkScene& scene);

struct EstimateReport {
  std::vector<Eigen::Vector2d> targets_est;
  std::vector<Eigen::Vector2d> anchors_est;
  std::optional<std::vector<double>> power_est_dbm;
  std::optional<double> ple_est;
  std::optional<double> beta0;
  std::vector<LinkRef> links;
  std::vector<double> dist_est_m;  // per link, clamped to >= 0
  std::vector<int> clamped_links;  // indices where u_hat < 0 was clamped
  /// Ratio of the two largest eigenvalues of [1 mu'; mu K] at the optimum;
  /// large values indicate a tight relaxation.
  double rank1_ratio{0.0};
  std::vector<std::string> warnings;
  conic::SolveResult solver;
};

/// Initial PLE estimate from anchor-anchor links (weighted LS over the
/// log-distance model, weights sigma^-2, measured anchor positions).
double estimate_beta0(const model::MeasurementSet& meas,
                      const model::NetworkScene& scene);

/// Scenario I: transmit powers and PLE known.
EstimateReport ctup1(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const std::vector<double>& tx_power_dbm, double beta,
                     const EstimatorSettings& settings = {});

/// Scenario II: powers known, PLE unknown (first-order correction around
/// beta0 from the anchor links).
EstimateReport ctup2(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const std::vector<double>& tx_power_dbm,
                     const EstimatorSettings& settings = {});

/// Scenario III: powers unknown, PLE known.
EstimateReport ctup3(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene, double beta,
                     const EstimatorSettings& settings = {});

/// Scenario IV: powers and PLE unknown (Algorithm 1: solve, then refine
/// powers and PLE in closed form).
EstimateReport ctup4(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const EstimatorSettings& settings = {});

/// Dispatch on the scenario flags. known_power/known_beta are consulted only
/// when the scenario marks them known.
EstimateReport run_estimator(model::Scenario scenario,
                             const model::MeasurementSet& meas,
                             const model::NetworkScene& scene,
                             const std::vector<double>& known_power_dbm,
                             double known_beta,
                             const EstimatorSettings& settings = {});

/// One refinement link: received power, estimated distance, LS weight.
struct RefineLink {
  int target{0};
  double p_rx_dbm{0.0};
  double d_hat_m{1.0};
  double weight{1.0};
};

/// Closed-form power refinement: weighted mean of h_ij = P_ij +
/// 10 beta0 log10 d_ij over each target's links. Links with d_hat <= 0 are
/// skipped; a target with no usable link is an error.
std::vector<double> refine_power(const std::vector<RefineLink>& links,
                                 double beta0, int n_targets);

/// Closed-form PLE refinement: weighted LS fit of q_ij = beta * phi_ij with
/// q_ij = P_hat_j - P_ij and phi_ij = 10 log10 d_ij. Links with d_hat <= 0
/// are skipped.
double refine_ple(const std::vector<RefineLink>& links,
                  const std::vector<double>& p_hat_dbm);

}  // namespace ctup::estimators
