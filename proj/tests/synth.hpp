#pragma once

// Shared helpers for estimator tests: small scenes with exact (noise-free)
// measurements, optionally using a different PLE on the anchor-anchor links.

#include <random>
#include <vector>

#include "ctup/model.hpp"

namespace testutil {

inline ctup::model::NetworkScene desk_scene(int n_targets = 1) {
  ctup::model::NetworkScene sc;
  // Generic anchor layout: no three collinear and not concyclic.  Four
  // concyclic anchors (e.g. square corners) leave a one-parameter family of
  // zero-residual solutions when the transmit power or PLE is also unknown,
  // so the unknown-power estimators would be unidentifiable on this scene.
  sc.anchors_true = {{0.0, 0.0}, {10.0, 1.0}, {2.0, 9.0}, {9.0, 7.0}};
  if (n_targets >= 1) sc.targets_true.push_back({4.0, 3.0});
  if (n_targets >= 2) sc.targets_true.push_back({7.0, 6.0});
  sc.tx_power_dbm.assign(n_targets, 0.0);
  sc.tx_power_dbm[0] = -2.0;
  sc.ple = 3.0;
  sc.make_fully_connected();
  return sc;
}

// Exact forward-model measurements; anchor fixes equal to truth.
// anchor_beta lets the anchor-anchor links follow a different exponent (so
// beta0 lands away from the true PLE on purpose).
inline ctup::model::MeasurementSet exact_measurements(
    const ctup::model::NetworkScene& sc, double sigma_db = 1e-6,
    double delta_m = 1e-6, double anchor_beta = -1.0,
    double anchor_power_dbm = 0.0) {
  using namespace ctup::model;
  if (anchor_beta <= 0.0) anchor_beta = sc.ple;
  MeasurementSet ms;
  auto pos = [&](NodeId n) {
    return n.kind == NodeId::Kind::Anchor ? sc.anchors_true[n.index]
                                          : sc.targets_true[n.index];
  };
  for (int j = 0; j < sc.num_targets(); ++j) {
    for (int i : sc.target_anchor[j]) {
      const double d = (sc.targets_true[j] - sc.anchors_true[i]).norm();
      ms.rss.push_back({target(j), anchor(i),
                        pathloss_forward(sc.tx_power_dbm[j], sc.ple, d, sc.d0_m),
                        sigma_db});
    }
    for (int i : sc.target_target[j]) {
      const double d = (sc.targets_true[j] - sc.targets_true[i]).norm();
      ms.rss.push_back({target(j), target(i),
                        pathloss_forward(sc.tx_power_dbm[j], sc.ple, d, sc.d0_m),
                        sigma_db});
    }
  }
  for (int j = 0; j < sc.num_anchors(); ++j)
    for (int i : sc.anchor_anchor[j]) {
      const double d = (sc.anchors_true[j] - sc.anchors_true[i]).norm();
      ms.rss.push_back({anchor(j), anchor(i),
                        pathloss_forward(anchor_power_dbm, anchor_beta, d, sc.d0_m),
                        sigma_db});
    }
  for (const auto& s : sc.anchors_true) ms.anchor_fixes.push_back({s, delta_m});
  ms.anchor_tx_power_dbm.assign(sc.num_anchors(), anchor_power_dbm);
  return ms;
}

// Adds iid Gaussian noise to the RSS readings and anchor fixes.
inline void add_noise(ctup::model::MeasurementSet& ms, double sigma_db,
                      double delta_m, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& m : ms.rss) {
    m.p_dbm += sigma_db * n01(rng);
    m.sigma_db = sigma_db;
  }
  for (auto& f : ms.anchor_fixes) {
    f.pos_m.x() += delta_m * n01(rng);
    f.pos_m.y() += delta_m * n01(rng);
    f.delta_m = delta_m;
  }
}

// Golden-section minimizer of a unimodal 1-D function.
template <typename F>
double golden_min(F f, double lo, double hi, double tol = 1e-12) {
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// One exact parabolic-interpolation step around x (the costs under test are
// quadratic, so this removes the flat-minimum noise floor of golden_min).
template <typename F>
double quad_polish(F f, double x, double h = 1.0) {
  const double fa = f(x - h), fb = f(x), fc = f(x + h);
  const double denom = fa - 2.0 * fb + fc;
  if (denom == 0.0) return x;
  return x + h * (fa - fc) / (2.0 * denom);
}

}  // namespace testutil
