#include "ctup/sim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ctup/crlb.hpp"
#include "ctup/estimators.hpp"

namespace ctup::sim {

namespace {

const char* kAxes[] = {"sigma_db", "delta_m", "n_anchors", "n_targets"};

int estimator_id_from_name(const std::string& name) {
  if (name.size() == 5 && name.compare(0, 4, "ctup") == 0 &&
      name[4] >= '1' && name[4] <= '4')
    return name[4] - '0';
  throw std::runtime_error("sweep spec: unknown estimator \"" + name +
                           "\" (expected ctup1..ctup4)");
}

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void SweepSpec::validate() const {
  bool axis_ok = false;
  for (const char* a : kAxes) axis_ok = axis_ok || axis == a;
  if (!axis_ok)
    throw std::runtime_error("sweep spec: unknown axis \"" + axis + "\"");
  if (grid.empty()) throw std::runtime_error("sweep spec: empty grid");
  if (trials < 1) throw std::runtime_error("sweep spec: trials must be >= 1");
  if (estimators.empty())
    throw std::runtime_error("sweep spec: no estimators selected");
  for (int id : estimators)
    if (id < 1 || id > 4)
      throw std::runtime_error("sweep spec: estimator id out of range");
  if (sigma_db < 0.0 || delta_m < 0.0)
    throw std::runtime_error("sweep spec: negative noise level");
  if (beta <= 0.0) throw std::runtime_error("sweep spec: beta must be > 0");
  if (solver_tol <= 0.0)
    throw std::runtime_error("sweep spec: solver_tol must be > 0");
  const bool count_axis = axis == "n_anchors" || axis == "n_targets";
  if (count_axis && scene.kind == SceneSource::Kind::File)
    throw std::runtime_error(
        "sweep spec: node-count axes require a generated scene");
  for (double g : grid) {
    if (count_axis && (g < 1.0 || g != std::floor(g)))
      throw std::runtime_error("sweep spec: node counts must be integers >= 1");
    if (!count_axis && g < 0.0)
      throw std::runtime_error("sweep spec: negative grid value");
  }
}

SweepSpec SweepSpec::from_json(const nlohmann::json& j) {
  SweepSpec s;
  if (j.contains("scene")) {
    const auto& sc = j.at("scene");
    const std::string type = sc.value("type", "generated");
    if (type == "generated") {
      s.scene.kind = SceneSource::Kind::Generated;
      s.scene.n_anchors = sc.value("n_anchors", s.scene.n_anchors);
      s.scene.n_targets = sc.value("n_targets", s.scene.n_targets);
      s.scene.area_m = sc.value("area_m", s.scene.area_m);
      s.scene.seed = sc.value("seed", s.scene.seed);
    } else if (type == "file") {
      s.scene.kind = SceneSource::Kind::File;
      s.scene.path = sc.at("path").get<std::string>();
    } else {
      throw std::runtime_error("sweep spec: unknown scene type \"" + type +
                               "\"");
    }
  }
  s.axis = j.value("axis", s.axis);
  if (j.contains("grid")) s.grid = j.at("grid").get<std::vector<double>>();
  s.sigma_db = j.value("sigma_db", s.sigma_db);
  s.delta_m = j.value("delta_m", s.delta_m);
  s.beta = j.value("beta", s.beta);
  if (j.contains("power_range_dbm")) {
    auto pr = j.at("power_range_dbm").get<std::vector<double>>();
    if (pr.size() != 2)
      throw std::runtime_error("sweep spec: power_range_dbm needs 2 entries");
    s.power_range_dbm = {pr[0], pr[1]};
  }
  s.anchor_power_dbm = j.value("anchor_power_dbm", s.anchor_power_dbm);
  s.trials = j.value("trials", s.trials);
  if (j.contains("estimators")) {
    s.estimators.clear();
    for (const auto& e : j.at("estimators"))
      s.estimators.push_back(estimator_id_from_name(e.get<std::string>()));
  }
  s.seed = j.value("seed", s.seed);
  s.solver_tol = j.value("solver_tol", s.solver_tol);
  s.validate();
  return s;
}

nlohmann::json SweepSpec::to_json() const {
  nlohmann::json j;
  if (scene.kind == SceneSource::Kind::Generated) {
    j["scene"] = {{"type", "generated"},
                  {"n_anchors", scene.n_anchors},
                  {"n_targets", scene.n_targets},
                  {"area_m", scene.area_m},
                  {"seed", scene.seed}};
  } else {
    j["scene"] = {{"type", "file"}, {"path", scene.path}};
  }
  j["axis"] = axis;
  j["grid"] = grid;
  j["sigma_db"] = sigma_db;
  j["delta_m"] = delta_m;
  j["beta"] = beta;
  j["power_range_dbm"] = {power_range_dbm[0], power_range_dbm[1]};
  j["anchor_power_dbm"] = anchor_power_dbm;
  j["trials"] = trials;
  std::vector<std::string> names;
  for (int id : estimators) names.push_back("ctup" + std::to_string(id));
  j["estimators"] = names;
  j["seed"] = seed;
  j["solver_tol"] = solver_tol;
  return j;
}

model::NetworkScene generate_scene(int n_anchors, int n_targets, double area_m,
                                   double beta,
                                   std::array<double, 2> power_range_dbm,
                                   std::mt19937& rng) {
  if (area_m <= 0.0) throw std::invalid_argument("generate_scene: area <= 0");
  std::uniform_real_distribution<double> upos(0.0, area_m);
  std::uniform_real_distribution<double> upow(power_range_dbm[0],
                                              power_range_dbm[1]);
  model::NetworkScene sc;
  for (int i = 0; i < n_anchors; ++i) {
    const double x = upos(rng), y = upos(rng);
    sc.anchors_true.push_back({x, y});
  }
  for (int j = 0; j < n_targets; ++j) {
    const double x = upos(rng), y = upos(rng);
    sc.targets_true.push_back({x, y});
  }
  sc.tx_power_dbm.resize(n_targets);
  for (auto& p : sc.tx_power_dbm) p = upow(rng);
  sc.ple = beta;
  sc.make_fully_connected();
  return sc;
}

model::MeasurementSet synthesize_measurements(const model::NetworkScene& scene,
                                              double sigma_db, double delta_m,
                                              std::mt19937& rng,
                                              double anchor_power_dbm) {
  if (sigma_db < 0.0 || delta_m < 0.0)
    throw std::invalid_argument("synthesize_measurements: negative noise std");
  std::normal_distribution<double> n01(0.0, 1.0);
  const double sig = std::max(sigma_db, 1e-9);
  const double del = std::max(delta_m, 1e-9);
  auto pos = [&](model::NodeId n) {
    return n.kind == model::NodeId::Kind::Anchor ? scene.anchors_true[n.index]
                                                 : scene.targets_true[n.index];
  };
  model::MeasurementSet ms;
  auto add = [&](model::NodeId tx, model::NodeId rx, double p_tx) {
    const double d = (pos(tx) - pos(rx)).norm();
    const double p =
        model::pathloss_forward(p_tx, scene.ple, d, scene.d0_m) +
        sigma_db * n01(rng);
    ms.rss.push_back({tx, rx, p, sig});
  };
  for (int j = 0; j < scene.num_targets(); ++j) {
    for (int i : scene.target_anchor[j])
      add(model::target(j), model::anchor(i), scene.tx_power_dbm[j]);
    for (int i : scene.target_target[j])
      add(model::target(j), model::target(i), scene.tx_power_dbm[j]);
  }
  for (int j = 0; j < scene.num_anchors(); ++j)
    for (int i : scene.anchor_anchor[j])
      add(model::anchor(j), model::anchor(i), anchor_power_dbm);
  for (const auto& s : scene.anchors_true) {
    Eigen::Vector2d noisy = s;
    noisy.x() += delta_m * n01(rng);
    noisy.y() += delta_m * n01(rng);
    ms.anchor_fixes.push_back({noisy, del});
  }
  ms.anchor_tx_power_dbm.assign(scene.num_anchors(), anchor_power_dbm);
  return ms;
}

double nrmse(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("nrmse: empty input");
  double ss = 0.0;
  for (double e : errors) ss += e * e;
  return std::sqrt(ss / static_cast<double>(errors.size()));
}

SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  model::NetworkScene base_scene;
  const bool count_axis = spec.axis == "n_anchors" || spec.axis == "n_targets";
  if (spec.scene.kind == SceneSource::Kind::File) {
    std::ifstream in(spec.scene.path);
    if (!in)
      throw std::runtime_error("run_sweep: cannot open scene file " +
                               spec.scene.path);
    base_scene = scene_from_json(nlohmann::json::parse(in));
  } else if (!count_axis) {
    std::mt19937 rng(spec.scene.seed);
    base_scene = generate_scene(spec.scene.n_anchors, spec.scene.n_targets,
                                spec.scene.area_m, spec.beta,
                                spec.power_range_dbm, rng);
  }

  estimators::EstimatorSettings est_settings;
  est_settings.solver.tol_gap = spec.solver_tol;
  est_settings.solver.tol_feas = spec.solver_tol;

  SweepResult out;
  out.spec = spec;
  for (size_t gi = 0; gi < spec.grid.size(); ++gi) {
    const double axis_value = spec.grid[gi];
    double sigma = spec.sigma_db, delta = spec.delta_m;
    model::NetworkScene scene = base_scene;
    if (spec.axis == "sigma_db") {
      sigma = axis_value;
    } else if (spec.axis == "delta_m") {
      delta = axis_value;
    } else {
      std::mt19937 rng(spec.scene.seed);
      const int na = spec.axis == "n_anchors" ? static_cast<int>(axis_value)
                                              : spec.scene.n_anchors;
      const int nt = spec.axis == "n_targets" ? static_cast<int>(axis_value)
                                              : spec.scene.n_targets;
      scene = generate_scene(na, nt, spec.scene.area_m, spec.beta,
                             spec.power_range_dbm, rng);
    }

    struct Acc {
      std::vector<double> t_err, p_err, b_err;
      double time_s = 0.0;
      int successes = 0, failures = 0;
    };
    std::vector<Acc> acc(spec.estimators.size());

    for (int trial = 0; trial < spec.trials; ++trial) {
      std::seed_seq sseq{spec.seed, static_cast<unsigned>(gi),
                         static_cast<unsigned>(trial)};
      std::mt19937 rng(sseq);
      const auto ms = synthesize_measurements(scene, sigma, delta, rng,
                                              spec.anchor_power_dbm);
      for (size_t ei = 0; ei < spec.estimators.size(); ++ei) {
        const auto scenario = model::Scenario::from_id(spec.estimators[ei]);
        auto& a = acc[ei];
        try {
          const auto t0 = std::chrono::steady_clock::now();
          auto rep = estimators::run_estimator(scenario, ms, scene,
                                               scene.tx_power_dbm, scene.ple,
                                               est_settings);
          a.time_s += std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
          using conic::SolveStatus;
          if (rep.solver.status != SolveStatus::Optimal &&
              rep.solver.status != SolveStatus::Inaccurate) {
            ++a.failures;
            continue;
          }
          for (int j = 0; j < scene.num_targets(); ++j)
            a.t_err.push_back(
                (rep.targets_est[j] - scene.targets_true[j]).norm());
          if (!scenario.knows_power) {
            if (!rep.power_est_dbm) throw std::runtime_error("missing powers");
            for (int j = 0; j < scene.num_targets(); ++j)
              a.p_err.push_back((*rep.power_est_dbm)[j] -
                                scene.tx_power_dbm[j]);
          }
          if (!scenario.knows_ple) {
            if (!rep.ple_est) throw std::runtime_error("missing PLE");
            a.b_err.push_back(*rep.ple_est - scene.ple);
          }
          ++a.successes;
        } catch (const std::exception&) {
          ++a.failures;
        }
      }
    }

    for (size_t ei = 0; ei < spec.estimators.size(); ++ei) {
      const auto scenario = model::Scenario::from_id(spec.estimators[ei]);
      const auto& a = acc[ei];
      SweepRow row;
      row.axis_value = axis_value;
      row.estimator = spec.estimators[ei];
      row.failures = a.failures;
      const int runs = a.successes + a.failures;
      row.mean_solve_time_s = runs > 0 ? a.time_s / runs : 0.0;
      if (!a.t_err.empty()) row.nrmse_t_m = nrmse(a.t_err);
      if (!a.p_err.empty()) row.nrmse_p_dbm = nrmse(a.p_err);
      if (!a.b_err.empty()) row.nrmse_beta = nrmse(a.b_err);
      try {
        auto rep = crlb::crlb(crlb::build_fim(scene, std::max(sigma, 1e-9),
                                              std::max(delta, 1e-9), scenario));
        row.crlb_t_m = rep.crlb_t_m;
        row.crlb_p_dbm = rep.crlb_p_dbm;
        row.crlb_beta = rep.crlb_beta;
      } catch (const std::exception&) {
        // singular FIM: leave the bound columns empty
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::string csv =
      "axis_value,estimator,nrmse_t_m,nrmse_p_dbm,nrmse_beta,crlb_t_m,"
      "crlb_p_dbm,crlb_beta,mean_solve_time_s,failures\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? csv_num(*v) : std::string();
  };
  for (const auto& r : rows) {
    csv += csv_num(r.axis_value) + ",ctup" + std::to_string(r.estimator) +
           "," + csv_num(r.nrmse_t_m) + "," + opt(r.nrmse_p_dbm) + "," +
           opt(r.nrmse_beta) + "," + opt(r.crlb_t_m) + "," +
           opt(r.crlb_p_dbm) + "," + opt(r.crlb_beta) + "," +
           csv_num(r.mean_solve_time_s) + "," + std::to_string(r.failures) +
           "\n";
  }
  return csv;
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json j;
  j["spec"] = spec.to_json();
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["axis_value"] = r.axis_value;
    row["estimator"] = "ctup" + std::to_string(r.estimator);
    row["nrmse_t_m"] = r.nrmse_t_m;
    auto put = [&](const char* key, const std::optional<double>& v) {
      if (v) row[key] = *v;
    };
    put("nrmse_p_dbm", r.nrmse_p_dbm);
    put("nrmse_beta", r.nrmse_beta);
    put("crlb_t_m", r.crlb_t_m);
    put("crlb_p_dbm", r.crlb_p_dbm);
    put("crlb_beta", r.crlb_beta);
    row["mean_solve_time_s"] = r.mean_solve_time_s;
    row["failures"] = r.failures;
    j["rows"].push_back(row);
  }
  return j;
}

nlohmann::json scene_to_json(const model::NetworkScene& scene) {
  nlohmann::json j;
  auto points = [](const std::vector<Eigen::Vector2d>& ps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : ps) arr.push_back({p.x(), p.y()});
    return arr;
  };
  j["anchors"] = points(scene.anchors_true);
  j["targets"] = points(scene.targets_true);
  j["tx_power_dbm"] = scene.tx_power_dbm;
  j["ple"] = scene.ple;
  j["d0_m"] = scene.d0_m;
  return j;
}

model::NetworkScene scene_from_json(const nlohmann::json& j) {
  model::NetworkScene sc;
  auto points = [](const nlohmann::json& arr) {
    std::vector<Eigen::Vector2d> ps;
    for (const auto& p : arr) {
      if (!p.is_array() || p.size() != 2)
        throw std::runtime_error("scene json: positions must be [x, y]");
      ps.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    return ps;
  };
  sc.anchors_true = points(j.at("anchors"));
  sc.targets_true = points(j.at("targets"));
  sc.tx_power_dbm = j.at("tx_power_dbm").get<std::vector<double>>();
  sc.ple = j.value("ple", 3.0);
  sc.d0_m = j.value("d0_m", 1.0);
  sc.make_fully_connected();
  sc.validate();
  return sc;
}

}  // namespace ctup::sim
