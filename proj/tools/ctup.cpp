// Command-line front end: Monte-Carlo sweeps, dataset estimation, CRLB
// evaluation, and path-loss calibration.
//
// Exit codes: 0 success, 1 configuration/data error, 2 partial failures
// (some sweep trials failed; details in the CSV).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "ctup/crlb.hpp"
#include "ctup/dataio.hpp"
#include "ctup/estimators.hpp"
#include "ctup/model.hpp"
#include "ctup/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctup;

namespace {

struct GlobalOpts {
  std::string out_dir{"."};
  std::optional<unsigned> seed;
  bool verbose{false};
};

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "."
                                                    : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json histogram_json(const dataio::Histogram& h) {
  return json{{"bin_edges", h.bin_edges}, {"densities", h.densities}};
}

int cmd_simulate(const GlobalOpts& g, const std::string& spec_path,
                 std::optional<int> trials,
                 const std::vector<std::string>& estimator_names) {
  std::ifstream in(spec_path);
  if (!in) {
    std::cerr << "error: cannot open sweep spec " << spec_path << "\n";
    return 1;
  }
  auto spec = sim::SweepSpec::from_json(json::parse(in));
  if (trials) spec.trials = *trials;
  if (!estimator_names.empty()) {
    spec.estimators.clear();
    for (const auto& n : estimator_names) {
      if (n.size() != 5 || n.compare(0, 4, "ctup") != 0 || n[4] < '1' ||
          n[4] > '4')
        throw std::runtime_error("unknown estimator \"" + n + "\"");
      spec.estimators.push_back(n[4] - '0');
    }
  }
  if (g.seed) spec.seed = *g.seed;
  spec.validate();
  if (g.verbose)
    std::cerr << "sweep: axis " << spec.axis << ", " << spec.grid.size()
              << " grid points x " << spec.trials << " trials\n";

  auto result = sim::run_sweep(spec);
  write_file(fs::path(g.out_dir) / "sweep.csv", result.to_csv());
  write_file(fs::path(g.out_dir) / "sweep.json", result.to_json().dump(2) + "\n");

  int failures = 0;
  for (const auto& r : result.rows) failures += r.failures;
  if (failures > 0) {
    std::cerr << "warning: " << failures
              << " trial estimates failed (see sweep.csv)\n";
    return 2;
  }
  return 0;
}

int cmd_estimate(const GlobalOpts& g, const std::string& data_dir,
                 int scenario_id, bool positions_only) {
  const auto scenario = model::Scenario::from_id(scenario_id);
  auto ds = dataio::load_dataset(data_dir);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";

  if (scenario.knows_power && !ds.targets_have_power) {
    std::cerr << "error: scenario " << scenario_id
              << " requires tx_power_dbm for every target in nodes.csv\n";
    return 1;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto rep = estimators::run_estimator(scenario, ds.meas, ds.scene,
                                       ds.scene.tx_power_dbm, ds.scene.ple);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  json out;
  out["scenario"] = scenario_id;
  out["solver"] = {{"status", to_string(rep.solver.status)},
                   {"iterations", rep.solver.iterations},
                   {"solve_time_s", elapsed}};
  out["rank1_ratio"] = rep.rank1_ratio;
  out["warnings"] = rep.warnings;
  json targets = json::array();
  for (size_t j = 0; j < rep.targets_est.size(); ++j)
    targets.push_back({{"id", ds.target_names[j]},
                       {"pos_m", {rep.targets_est[j].x(), rep.targets_est[j].y()}}});
  out["targets"] = targets;
  json anchors = json::array();
  for (size_t i = 0; i < rep.anchors_est.size(); ++i)
    anchors.push_back({{"id", ds.anchor_names[i]},
                       {"pos_m", {rep.anchors_est[i].x(), rep.anchors_est[i].y()}}});
  out["anchors"] = anchors;
  if (!positions_only) {
    if (rep.beta0) out["beta0"] = *rep.beta0;
    if (rep.ple_est) out["ple_est"] = *rep.ple_est;
    if (rep.power_est_dbm) {
      json p = json::array();
      for (size_t j = 0; j < rep.power_est_dbm->size(); ++j)
        p.push_back({{"id", ds.target_names[j]},
                     {"power_dbm", (*rep.power_est_dbm)[j]}});
      out["power_est_dbm"] = p;
    }
  }
  write_file(fs::path(g.out_dir) / "estimate.json", out.dump(2) + "\n");

  std::string csv = "target_id,error_m,error_p_dbm\n";
  char buf[96];
  for (size_t j = 0; j < rep.targets_est.size(); ++j) {
    const double err =
        (rep.targets_est[j] - ds.scene.targets_true[j]).norm();
    std::string perr;
    if (!positions_only && rep.power_est_dbm && ds.targets_have_power) {
      std::snprintf(buf, sizeof buf, "%.6g",
                    (*rep.power_est_dbm)[j] - ds.scene.tx_power_dbm[j]);
      perr = buf;
    }
    std::snprintf(buf, sizeof buf, "%.6g", err);
    csv += ds.target_names[j] + "," + buf + "," + perr + "\n";
  }
  write_file(fs::path(g.out_dir) / "errors.csv", csv);
  if (g.verbose)
    std::cerr << "estimate: " << to_string(rep.solver.status) << " in "
              << elapsed << " s\n";
  return 0;
}

int cmd_crlb(const GlobalOpts& g, const std::string& scene_path, int n_anchors,
             int n_targets, double area_m, double beta, int scenario_id,
             double sigma_db, double delta_m) {
  model::NetworkScene scene;
  if (!scene_path.empty()) {
    std::ifstream in(scene_path);
    if (!in) {
      std::cerr << "error: cannot open scene file " << scene_path << "\n";
      return 1;
    }
    scene = sim::scene_from_json(json::parse(in));
  } else {
    std::mt19937 rng(g.seed.value_or(1));
    scene = sim::generate_scene(n_anchors, n_targets, area_m, beta,
                                {-10.0, 10.0}, rng);
  }
  const auto scenario = model::Scenario::from_id(scenario_id);
  auto fim = crlb::build_fim(scene, sigma_db, delta_m, scenario);
  auto rep = crlb::crlb(fim);

  json out;
  out["scenario"] = scenario_id;
  out["fim_dim"] = fim.dim();
  out["crlb_t_m"] = rep.crlb_t_m;
  if (rep.crlb_p_dbm) out["crlb_p_dbm"] = *rep.crlb_p_dbm;
  if (rep.crlb_beta) out["crlb_beta"] = *rep.crlb_beta;
  out["per_target_var_m2"] = rep.per_target_var_m2;
  write_file(fs::path(g.out_dir) / "crlb.json", out.dump(2) + "\n");
  return 0;
}

int cmd_fit(const GlobalOpts& g, const std::string& calib_path,
            const std::string& data_dir) {
  std::vector<dataio::PathlossPoint> points;
  json out;
  if (!calib_path.empty()) {
    std::ifstream in(calib_path);
    if (!in) {
      std::cerr << "error: cannot open calibration file " << calib_path << "\n";
      return 1;
    }
    std::string line;
    if (!std::getline(in, line) ||
        (line != "distance_m,rssi_dbm" && line != "distance_m,rssi_dbm\r")) {
      std::cerr << "error: " << calib_path
                << " must start with header distance_m,rssi_dbm\n";
      return 1;
    }
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw std::runtime_error(calib_path + ":" + std::to_string(lineno) +
                                 ": expected 2 fields");
      points.push_back({std::stod(line.substr(0, comma)),
                        std::stod(line.substr(comma + 1))});
    }
  } else {
    // raw dataset: distances from RTK truth, one point per directed link
    auto ds = dataio::load_dataset(data_dir);
    auto pos = [&](model::NodeId n) {
      return n.kind == model::NodeId::Kind::Anchor
                 ? ds.scene.anchors_true[n.index]
                 : ds.scene.targets_true[n.index];
    };
    for (const auto& m : ds.meas.rss)
      points.push_back({(pos(m.tx) - pos(m.rx)).norm(), m.p_dbm});
    // GPS deviation histogram (standard fixes vs RTK truth, both coordinates)
    std::vector<double> dev;
    for (int i = 0; i < ds.scene.num_anchors(); ++i) {
      const Eigen::Vector2d d =
          ds.meas.anchor_fixes[i].pos_m - ds.scene.anchors_true[i];
      dev.push_back(d.x());
      dev.push_back(d.y());
    }
    if (!dev.empty()) out["gps_deviation_hist"] = histogram_json(dataio::histogram_pdf(dev));
  }

  auto fit = dataio::fit_pathloss(points);
  out["p0_dbm"] = fit.p0_dbm;
  out["ple"] = fit.ple;
  out["residual_std_db"] = fit.residual_std_db;
  out["n_points"] = fit.n_points;
  out["r_squared"] = fit.r_squared;

  std::vector<double> residuals;
  for (const auto& p : points)
    residuals.push_back(p.rssi_dbm -
                        (fit.p0_dbm - 10.0 * fit.ple * std::log10(p.d_m)));
  out["rss_residual_hist"] = histogram_json(dataio::histogram_pdf(residuals));

  write_file(fs::path(g.out_dir) / "calibration.json", out.dump(2) + "\n");
  if (g.verbose)
    std::cerr << "fit: P0 " << fit.p0_dbm << " dBm, beta " << fit.ple
              << ", sigma " << fit.residual_std_db << " dB\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative RSS localization toolkit"};
  app.require_subcommand(1);
  // let the global --out/--seed/--verbose appear after the subcommand too
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  unsigned seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "RNG seed override");
  app.add_flag("--verbose", g.verbose, "Progress output on stderr");

  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte-Carlo sweep");
  std::string spec_path;
  std::optional<int> trials;
  std::vector<std::string> estimator_names;
  sim_cmd->add_option("--spec", spec_path, "Sweep spec JSON")->required();
  int trials_val = 0;
  auto* trials_opt = sim_cmd->add_option("--trials", trials_val,
                                         "Override the trial count");
  sim_cmd->add_option("--estimators", estimator_names,
                      "Estimators to run (ctup1..ctup4)");

  auto* est_cmd = app.add_subcommand("estimate", "Estimate from a dataset");
  std::string data_dir;
  int scenario_id = 4;
  std::string estimate_only;
  est_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  est_cmd->add_option("--scenario", scenario_id, "Scenario id 1..4")
      ->required()
      ->check(CLI::Range(1, 4));
  est_cmd->add_option("--estimate-only", estimate_only,
                      "Set to t to report positions only");

  auto* crlb_cmd = app.add_subcommand("crlb", "Evaluate the CRLB");
  std::string scene_path;
  int n_anchors = 5, n_targets = 10, crlb_scenario = 4;
  double area_m = 100.0, beta = 3.0, sigma_db = 3.0, delta_m = 3.0;
  crlb_cmd->add_option("--scene", scene_path, "Scene JSON file");
  crlb_cmd->add_option("--n-anchors", n_anchors, "Generated scene: anchors");
  crlb_cmd->add_option("--n-targets", n_targets, "Generated scene: targets");
  crlb_cmd->add_option("--area", area_m, "Generated scene: square side (m)");
  crlb_cmd->add_option("--beta", beta, "Path-loss exponent");
  crlb_cmd->add_option("--scenario", crlb_scenario, "Scenario id 1..4")
      ->check(CLI::Range(1, 4));
  crlb_cmd->add_option("--sigma", sigma_db, "RSS noise std (dB)");
  crlb_cmd->add_option("--delta", delta_m, "Anchor fix std (m)");

  auto* fit_cmd = app.add_subcommand("fit", "Fit the log-normal model");
  std::string calib_path, fit_data_dir;
  fit_cmd->add_option("--calib", calib_path,
                      "CSV of distance_m,rssi_dbm pairs");
  fit_cmd->add_option("--data", fit_data_dir, "Raw dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed_val;
  if (*trials_opt) trials = trials_val;

  try {
    if (*sim_cmd) return cmd_simulate(g, spec_path, trials, estimator_names);
    if (*est_cmd)
      return cmd_estimate(g, data_dir, scenario_id, estimate_only == "t");
    if (*crlb_cmd)
      return cmd_crlb(g, scene_path, n_anchors, n_targets, area_m, beta,
                      crlb_scenario, sigma_db, delta_m);
    if (*fit_cmd) {
      if (calib_path.empty() && fit_data_dir.empty()) {
        std::cerr << "error: fit needs --calib or --data\n";
        return 1;
      }
      return cmd_fit(g, calib_path, fit_data_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
