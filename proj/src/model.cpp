#include "ctup/model.hpp"

#include <cmath>
#include <numbers>

namespace ctup::model {

namespace {

void check_index_list(const std::vector<std::vector<int>>& adj, int outer,
                      int bound, bool forbid_self, const char* what) {
  if (static_cast<int>(adj.size()) != outer)
    throw std::invalid_argument(std::string(what) + ": wrong outer size");
  for (int j = 0; j < outer; ++j) {
    for (int i : adj[j]) {
      if (i < 0 || i >= bound)
        throw std::invalid_argument(std::string(what) + ": index out of range");
      if (forbid_self && i == j)
        throw std::invalid_argument(std::string(what) + ": self link");
    }
  }
}

}  // namespace

void NetworkScene::validate() const {
  if (d0_m <= 0.0) throw std::invalid_argument("NetworkScene: d0_m must be > 0");
  if (static_cast<int>(tx_power_dbm.size()) != num_targets())
    throw std::invalid_argument("NetworkScene: tx_power_dbm size mismatch");
  check_index_list(target_anchor, num_targets(), num_anchors(), false,
                   "target_anchor");
  check_index_list(target_target, num_targets(), num_targets(), true,
                   "target_target");
  check_index_list(anchor_anchor, num_anchors(), num_anchors(), true,
                   "anchor_anchor");
  for (int j = 0; j < num_targets(); ++j) {
    if (target_anchor[j].empty() && target_target[j].empty())
      throw std::invalid_argument(
          "NetworkScene: target " + std::to_string(j) + " has no links");
  }
}

void NetworkScene::make_fully_connected() {
  target_anchor.assign(num_targets(), {});
  target_target.assign(num_targets(), {});
  anchor_anchor.assign(num_anchors(), {});
  for (int j = 0; j < num_targets(); ++j) {
    for (int i = 0; i < num_anchors(); ++i) target_anchor[j].push_back(i);
    for (int i = 0; i < num_targets(); ++i)
      if (i != j) target_target[j].push_back(i);
  }
  for (int j = 0; j < num_anchors(); ++j)
    for (int i = 0; i < num_anchors(); ++i)
      if (i != j) anchor_anchor[j].push_back(i);
}

void MeasurementSet::validate(const NetworkScene& scene) const {
  auto listed = [](const std::vector<int>& v, int i) {
    return std::find(v.begin(), v.end(), i) != v.end();
  };
  for (const auto& m : rss) {
    if (m.sigma_db <= 0.0)
      throw std::invalid_argument("MeasurementSet: sigma_db must be > 0");
    bool ok = false;
    if (m.tx.kind == NodeId::Kind::Target) {
      if (m.rx.kind == NodeId::Kind::Anchor)
        ok = listed(scene.target_anchor.at(m.tx.index), m.rx.index);
      else
        ok = listed(scene.target_target.at(m.tx.index), m.rx.index);
    } else if (m.rx.kind == NodeId::Kind::Anchor) {
      ok = listed(scene.anchor_anchor.at(m.tx.index), m.rx.index);
    }
    if (!ok)
      throw std::invalid_argument(
          "MeasurementSet: rss entry not in declared adjacency");
  }
  if (static_cast<int>(anchor_fixes.size()) != scene.num_anchors())
    throw std::invalid_argument("MeasurementSet: anchor_fixes size mismatch");
  for (const auto& f : anchor_fixes)
    if (f.delta_m <= 0.0)
      throw std::invalid_argument("MeasurementSet: delta_m must be > 0");
}

const RssMeasurement* MeasurementSet::find(NodeId tx, NodeId rx) const {
  for (const auto& m : rss)
    if (m.tx == tx && m.rx == rx) return &m;
  return nullptr;
}

Scenario Scenario::from_id(int id) {
  switch (id) {
    case 1: return {true, true};
    case 2: return {true, false};
    case 3: return {false, true};
    case 4: return {false, false};
  }
  throw std::invalid_argument("Scenario id must be 1..4");
}

double pathloss_forward(double p_tx_dbm, double beta, double d_m, double d0_m) {
  if (d_m <= 0.0 || d0_m <= 0.0)
    throw std::domain_error("pathloss_forward: distance must be > 0");
  return p_tx_dbm - 10.0 * beta * std::log10(d_m / d0_m);
}

double distance_sq_from_rss(double p_tx_dbm, double p_rx_dbm, double beta) {
  if (beta <= 0.0)
    throw std::domain_error("distance_sq_from_rss: beta must be > 0");
  return std::pow(10.0, (p_tx_dbm - p_rx_dbm) / (5.0 * beta));
}

ParameterVector ParameterVector::from_scene(const NetworkScene& scene) {
  ParameterVector pv;
  pv.n_targets = scene.num_targets();
  pv.n_anchors = scene.num_anchors();
  pv.theta.resize(3 * pv.n_targets + 2 * pv.n_anchors + 1);
  for (int j = 0; j < pv.n_targets; ++j)
    pv.theta.segment<2>(2 * j) = scene.targets_true[j];
  for (int i = 0; i < pv.n_anchors; ++i)
    pv.theta.segment<2>(2 * pv.n_targets + 2 * i) = scene.anchors_true[i];
  for (int j = 0; j < pv.n_targets; ++j)
    pv.theta(2 * pv.n_targets + 2 * pv.n_anchors + j) = scene.tx_power_dbm[j];
  pv.theta(pv.theta.size() - 1) = scene.ple;
  return pv;
}

double loglikelihood(const ParameterVector& theta, const MeasurementSet& meas,
                     const NetworkScene& scene) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double ll = 0.0;
  for (const auto& m : meas.rss) {
    if (m.tx.kind != NodeId::Kind::Target) continue;  // anchor-anchor links
    const int j = m.tx.index;
    const Eigen::Vector2d tj = theta.target_pos(j);
    const Eigen::Vector2d other = (m.rx.kind == NodeId::Kind::Anchor)
                                      ? theta.anchor_pos(m.rx.index)
                                      : theta.target_pos(m.rx.index);
    const double d = (tj - other).norm();
    if (d <= 0.0) throw std::domain_error("loglikelihood: zero distance");
    const double r =
        m.p_dbm - theta.power(j) + 10.0 * theta.ple() * std::log10(d);
    const double s2 = m.sigma_db * m.sigma_db;
    ll += -0.5 * std::log(two_pi * s2) - r * r / (2.0 * s2);
  }
  for (int i = 0; i < scene.num_anchors(); ++i) {
    const auto& f = meas.anchor_fixes.at(i);
    const double d2 = (f.pos_m - theta.anchor_pos(i)).squaredNorm();
    const double v = f.delta_m * f.delta_m;
    ll += -std::log(two_pi * v) - d2 / (2.0 * v);
  }
  return ll;
}

}  // namespace ctup::model
