#include "ctup/crlb.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ctup::crlb {

namespace {

constexpr double kLogFactor = 10.0 / std::numbers::ln10;  // 10 / ln 10

}  // namespace

int FisherInfo::power_offset() const {
  if (scenario.knows_power) return -1;
  return 2 * n_targets + (exact_anchors ? 0 : 2 * n_anchors);
}

int FisherInfo::ple_offset() const {
  if (scenario.knows_ple) return -1;
  return dim() - 1;
}

FisherInfo build_fim(const model::NetworkScene& scene,
                     const model::MeasurementSet& meas,
                     model::Scenario scenario, bool exact_anchors) {
  scene.validate();
  meas.validate(scene);
  const int nt = scene.num_targets();
  const int na = scene.num_anchors();
  const int s_cols = exact_anchors ? 0 : 2 * na;
  const int p_cols = scenario.knows_power ? 0 : nt;
  const int b_cols = scenario.knows_ple ? 0 : 1;
  const int dim = 2 * nt + s_cols + p_cols + b_cols;

  FisherInfo out;
  out.scenario = scenario;
  out.n_targets = nt;
  out.n_anchors = na;
  out.exact_anchors = exact_anchors;
  out.F = Eigen::MatrixXd::Zero(dim, dim);

  // One row of C per directed target-transmitted reading; anchor-anchor
  // readings carry no likelihood term and therefore no row.
  Eigen::VectorXd c(dim);
  for (const auto& m : meas.rss) {
    if (m.tx.kind != model::NodeId::Kind::Target) continue;
    const int j = m.tx.index;
    const Eigen::Vector2d tj = scene.targets_true[j];
    c.setZero();
    double d;
    if (m.rx.kind == model::NodeId::Kind::Anchor) {
      const int i = m.rx.index;
      const Eigen::Vector2d si = scene.anchors_true[i];
      const double d2 = (si - tj).squaredNorm();
      if (d2 <= 0.0) throw std::domain_error("build_fim: zero-length link");
      d = std::sqrt(d2);
      const Eigen::Vector2d g =
          kLogFactor * scene.ple * (si - tj) / d2;  // d mean / d t_j
      c.segment<2>(2 * j) = g;
      if (!exact_anchors) c.segment<2>(2 * nt + 2 * i) = -g;
    } else {
      const int i = m.rx.index;
      const Eigen::Vector2d ti = scene.targets_true[i];
      const double d2 = (ti - tj).squaredNorm();
      if (d2 <= 0.0) throw std::domain_error("build_fim: zero-length link");
      d = std::sqrt(d2);
      const Eigen::Vector2d b = kLogFactor * scene.ple * (ti - tj) / d2;
      c.segment<2>(2 * j) = b;
      c.segment<2>(2 * i) = -b;
    }
    if (!scenario.knows_power) c(2 * nt + s_cols + j) = 1.0;
    if (!scenario.knows_ple) c(dim - 1) = -10.0 * std::log10(d);
    out.F.noalias() += (c * c.transpose()) / (m.sigma_db * m.sigma_db);
  }

  if (!exact_anchors) {
    for (int i = 0; i < na; ++i) {
      const double dl = meas.anchor_fixes.at(i).delta_m;
      out.F.block<2, 2>(2 * nt + 2 * i, 2 * nt + 2 * i) +=
          Eigen::Matrix2d::Identity() / (dl * dl);
    }
  }
  out.F = 0.5 * (out.F + out.F.transpose().eval());
  return out;
}

FisherInfo build_fim(const model::NetworkScene& scene, double sigma_db,
                     double delta_m, model::Scenario scenario,
                     bool exact_anchors) {
  model::MeasurementSet ms;
  auto push = [&](model::NodeId tx, model::NodeId rx) {
    ms.rss.push_back({tx, rx, 0.0, sigma_db});
  };
  for (int j = 0; j < scene.num_targets(); ++j) {
    for (int i : scene.target_anchor[j]) push(model::target(j), model::anchor(i));
    for (int i : scene.target_target[j]) push(model::target(j), model::target(i));
  }
  for (int j = 0; j < scene.num_anchors(); ++j)
    for (int i : scene.anchor_anchor[j]) push(model::anchor(j), model::anchor(i));
  for (const auto& s : scene.anchors_true) ms.anchor_fixes.push_back({s, delta_m});
  if (!scene.anchor_anchor.empty())
    ms.anchor_tx_power_dbm.assign(scene.num_anchors(), 0.0);
  return build_fim(scene, ms, scenario, exact_anchors);
}

CrlbReport crlb(const FisherInfo& fim) {
  const int dim = fim.dim();
  const int nt = fim.n_targets;
  if (dim == 0 || nt == 0)
    throw std::invalid_argument("crlb: empty Fisher information");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fim.F);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double lmax = ev(dim - 1);
  if (!(lmax > 0.0) || ev(0) <= 0.0 || lmax / ev(0) > 1e12) {
    std::ostringstream msg;
    msg << "crlb: singular Fisher information (condition "
        << (ev(0) > 0.0 ? lmax / ev(0)
                        : std::numeric_limits<double>::infinity())
        << "); near-null directions:";
    for (int k = 0; k < dim && (ev(k) <= 0.0 || lmax / ev(k) > 1e12); ++k) {
      msg << " [";
      const Eigen::VectorXd v = eig.eigenvectors().col(k);
      for (int r = 0; r < dim; ++r) {
        if (std::abs(v(r)) < 0.2) continue;
        msg << " theta_" << r + 1 << ":" << v(r);
      }
      msg << " ]";
    }
    throw std::runtime_error(msg.str());
  }

  const Eigen::MatrixXd Finv =
      eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose();

  CrlbReport rep;
  rep.per_target_var_m2.resize(nt);
  double tr_t = 0.0;
  for (int j = 0; j < nt; ++j) {
    rep.per_target_var_m2[j] = Finv.block<2, 2>(2 * j, 2 * j).trace();
    tr_t += rep.per_target_var_m2[j];
  }
  rep.crlb_t_m = std::sqrt(tr_t / nt);
  if (const int po = fim.power_offset(); po >= 0) {
    double tr_p = 0.0;
    for (int j = 0; j < nt; ++j) tr_p += Finv(po + j, po + j);
    rep.crlb_p_dbm = std::sqrt(tr_p / nt);
  }
  if (const int bo = fim.ple_offset(); bo >= 0)
    rep.crlb_beta = std::sqrt(Finv(bo, bo));
  return rep;
}

}  // namespace ctup::crlb
