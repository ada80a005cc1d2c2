#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctup/model.hpp"

namespace ctup::sim {

/// Where the ground-truth scene of a sweep comes from: drawn uniformly at
/// random over a square, or loaded from a scene JSON file.
struct SceneSource {
  enum class Kind { Generated, File };
  Kind kind{Kind::Generated};
  int n_anchors{5};
  int n_targets{10};
  double area_m{100.0};
  unsigned seed{1};
  std::string path;  // used when kind == File
};

/// One Monte-Carlo sweep: a scene, one grid axis, fixed nuisance parameters,
/// and the estimators to benchmark.
struct SweepSpec {
  SceneSource scene;
  std::string axis{"sigma_db"};  // sigma_db | delta_m | n_anchors | n_targets
  std::vector<double> grid;
  double sigma_db{3.0};
  double delta_m{3.0};
  double beta{3.0};
  std::array<double, 2> power_range_dbm{-10.0, 10.0};
  double anchor_power_dbm{0.0};
  int trials{100};
  std::vector<int> estimators{1, 2, 3, 4};  // CTUP ids
  unsigned seed{1};
  double solver_tol{1e-8};

  /// Throws std::runtime_error on schema violations (unknown axis, empty
  /// grid, trials < 1, bad estimator names, ...).
  void validate() const;

  static SweepSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One grid-point x estimator outcome. Optional metrics are absent when the
/// scenario does not estimate that parameter (or the CRLB was singular).
struct SweepRow {
  double axis_value{0.0};
  int estimator{1};
  double nrmse_t_m{0.0};
  std::optional<double> nrmse_p_dbm;
  std::optional<double> nrmse_beta;
  std::optional<double> crlb_t_m;
  std::optional<double> crlb_p_dbm;
  std::optional<double> crlb_beta;
  double mean_solve_time_s{0.0};
  int failures{0};
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;

  /// Header: axis_value, estimator, nrmse_t_m, nrmse_p_dbm, nrmse_beta,
  /// crlb_t_m, crlb_p_dbm, crlb_beta, mean_solve_time_s, failures.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Uniform node deployment over an area_m x area_m square with per-target
/// powers uniform over power_range_dbm; fully connected adjacency.
model::NetworkScene generate_scene(int n_anchors, int n_targets, double area_m,
                                   double beta,
                                   std::array<double, 2> power_range_dbm,
                                   std::mt19937& rng);

/// Forward-model readings plus iid Gaussian RSS noise (sigma_db) and
/// per-coordinate anchor-fix noise (delta_m). Anchor-anchor links use
/// anchor_power_dbm and the same sigma. Zero sigma/delta give exact values
/// (the stored stds are floored at 1e-9 to stay valid weights).
model::MeasurementSet synthesize_measurements(const model::NetworkScene& scene,
                                              double sigma_db, double delta_m,
                                              std::mt19937& rng,
                                              double anchor_power_dbm = 0.0);

/// Root-mean-square of the pooled error magnitudes. Throws on empty input.
double nrmse(const std::vector<double>& errors);

/// Runs the whole grid; estimator failures are counted per row and excluded
/// from the NRMSE averages, never aborting the sweep. Trial noise streams are
/// derived from (spec.seed, grid index, trial index).
SweepResult run_sweep(const SweepSpec& spec);

/// Scene JSON round-trip used by scene files and the CLI.
nlohmann::json scene_to_json(const model::NetworkScene& scene);
model::NetworkScene scene_from_json(const nlohmann::json& j);

}  // namespace ctup::sim
