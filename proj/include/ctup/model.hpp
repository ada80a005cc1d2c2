#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ctup::model {

/// Node identity: role plus a 0-based index within that role.
struct NodeId {
  enum class Kind { Anchor, Target };
  Kind kind{Kind::Anchor};
  int index{0};

  bool operator==(const NodeId&) const = default;
  auto operator<=>(const NodeId&) const = default;
};

inline NodeId anchor(int i) { return {NodeId::Kind::Anchor, i}; }
inline NodeId target(int j) { return {NodeId::Kind::Target, j}; }

/// Ground-truth network: node positions, per-target transmit powers, the
/// path-loss exponent, and the link topology (which node hears which).
///
/// Adjacency is stored from the receiver's perspective of each transmitter:
/// target_anchor[j] lists anchors that hear target j, target_target[j] lists
/// targets that hear target j, anchor_anchor[j] lists anchors that hear
/// anchor j. Links are directed; a pair may appear in both directions.
struct NetworkScene {
  std::vector<Eigen::Vector2d> anchors_true;
  std::vector<Eigen::Vector2d> targets_true;
  std::vector<double> tx_power_dbm;  // per target
  double ple{3.0};
  double d0_m{1.0};

  std::vector<std::vector<int>> target_anchor;  // A_j
  std::vector<std::vector<int>> target_target;  // T_j (no self links)
  std::vector<std::vector<int>> anchor_anchor;  // S_j

  int num_anchors() const { return static_cast<int>(anchors_true.size()); }
  int num_targets() const { return static_cast<int>(targets_true.size()); }

  /// Throws std::invalid_argument on inconsistent sizes, self links,
  /// out-of-range neighbor indices, non-positive d0, or a target with no
  /// links at all (unlocalizable).
  void validate() const;

  /// Fully connected adjacency over the current node counts.
  void make_fully_connected();
};

/// One directed RSS reading: power received at `rx` while `tx` transmits.
struct RssMeasurement {
  NodeId tx;
  NodeId rx;
  double p_dbm{0.0};
  double sigma_db{1.0};
};

/// Noisy position fix for one anchor with its per-coordinate std.
struct AnchorFix {
  Eigen::Vector2d pos_m{0.0, 0.0};
  double delta_m{1.0};
};

/// All observed data: directed RSS readings plus anchor position fixes.
/// anchor_tx_power_dbm is required only when anchor-anchor links are used.
struct MeasurementSet {
  std::vector<RssMeasurement> rss;
  std::vector<AnchorFix> anchor_fixes;
  std::vector<double> anchor_tx_power_dbm;

  /// Throws std::invalid_argument when sigma/delta are non-positive or an
  /// rss entry is inconsistent with the scene's declared adjacency.
  void validate(const NetworkScene& scene) const;

  const RssMeasurement* find(NodeId tx, NodeId rx) const;
};

/// Which model parameters the estimator may treat as known.
/// (true,true) -> CTUP-1, (true,false) -> CTUP-2,
/// (false,true) -> CTUP-3, (false,false) -> CTUP-4.
struct Scenario {
  bool knows_power{true};
  bool knows_ple{true};

  int id() const {
    if (knows_power && knows_ple) return 1;
    if (knows_power) return 2;
    if (knows_ple) return 3;
    return 4;
  }
  static Scenario from_id(int id);
};

/// Mean received power of the log-normal model: P_tx - 10 beta log10(d/d0).
double pathloss_forward(double p_tx_dbm, double beta, double d_m, double d0_m = 1.0);

/// Noise-free squared-distance inversion, d0 = 1 m: 10^{(p_tx - p_rx)/(5 beta)}.
double distance_sq_from_rss(double p_tx_dbm, double p_rx_dbm, double beta);

/// Canonical parameter packing [t; s; p; beta], dimension 3 N_t + 2 N_a + 1.
struct ParameterVector {
  Eigen::VectorXd theta;
  int n_targets{0};
  int n_anchors{0};

  static ParameterVector from_scene(const NetworkScene& scene);

  Eigen::Vector2d target_pos(int j) const { return theta.segment<2>(2 * j); }
  Eigen::Vector2d anchor_pos(int i) const {
    return theta.segment<2>(2 * n_targets + 2 * i);
  }
  double power(int j) const { return theta(2 * n_targets + 2 * n_anchors + j); }
  double ple() const { return theta(theta.size() - 1); }
};

/// Log of the exact measurement density at `theta`, including normalizers
/// (2-D Gaussian for anchor fixes). Adjacency is taken from `scene`; the
/// parameter values come from `theta` only.
double loglikelihood(const ParameterVector& theta, const MeasurementSet& meas,
                     const NetworkScene& scene);

}  // namespace ctup::model
