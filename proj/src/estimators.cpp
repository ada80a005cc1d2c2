#include "ctup/estimators.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctup::estimators {

namespace {

constexpr double kLn10 = 2.302585092994046;

const model::RssMeasurement& require_meas(const model::MeasurementSet& meas,
                                          model::NodeId tx, model::NodeId rx) {
  const auto* m = meas.find(tx, rx);
  if (!m)
    throw std::invalid_argument("estimators: missing rss measurement for a declared link");
  return *m;
}

struct ProgramContext {
  std::vector<LinkRef> links;
  std::vector<conic::LiftedLink> lifted;
  conic::VarSpace vs;
  conic::ConicProgram prog;
};

ProgramContext make_context(const model::NetworkScene& scene, bool with_epsilon,
                            int n_g, int n_r) {
  scene.validate();
  ProgramContext ctx;
  ctx.links = enumerate_links(scene);
  for (const auto& l : ctx.links)
    ctx.lifted.push_back({l.tx.index, l.rx.index,
                          l.rx.kind == model::NodeId::Kind::Target});
  const int mu_dim = 2 * (scene.num_targets() + scene.num_anchors());
  ctx.vs = conic::VarSpace::for_localization(
      mu_dim, static_cast<int>(ctx.links.size()), scene.num_anchors(),
      with_epsilon, n_g, n_r);
  ctx.prog.n_vars = ctx.vs.n_scalar();
  return ctx;
}

// Shared constraint skeleton: Schur block, squared-distance links, anchor
// penalties, epigraph SOC, and the residual encoding.
void add_common_constraints(ProgramContext& ctx,
                            const model::MeasurementSet& meas,
                            const model::NetworkScene& scene,
                            const std::vector<conic::LinExpr>& residuals,
                            const EstimatorSettings& settings) {
  auto& prog = ctx.prog;
  const auto& vs = ctx.vs;
  prog.psd_constraints.push_back(conic::build_schur_block(vs));
  for (auto& e : conic::build_sq_distance_links(vs, ctx.lifted,
                                                scene.num_targets()))
    prog.eq_constraints.push_back(std::move(e));
  std::vector<Eigen::Vector2d> fixes;
  for (const auto& f : meas.anchor_fixes) fixes.push_back(f.pos_m);
  for (auto& e : conic::build_anchor_penalty(vs, fixes, scene.num_targets()))
    prog.eq_constraints.push_back(std::move(e));
  if (settings.residual_lmi) {
    prog.psd_constraints.push_back(conic::build_residual_lmi(vs, residuals));
  } else {
    for (auto& e : conic::build_residual_equalities(vs, residuals))
      prog.eq_constraints.push_back(std::move(e));
  }
  prog.soc_constraints.push_back(conic::build_epigraph_soc(vs));
}

void add_objective(ProgramContext& ctx, const model::MeasurementSet& meas,
                   bool weight_anchor_penalty) {
  ctx.prog.objective.add(ctx.vs.omega(), 1.0);
  for (size_t i = 0; i < meas.anchor_fixes.size(); ++i) {
    const double d = meas.anchor_fixes[i].delta_m;
    const double w = weight_anchor_penalty ? 1.0 / (d * d) : 1.0;
    ctx.prog.objective.add(ctx.vs.lambda(static_cast<int>(i)), w);
  }
}

// Runs the solver and fills the geometry part of the report.
EstimateReport extract(ProgramContext& ctx, const model::NetworkScene& scene,
                       const EstimatorSettings& settings) {
  EstimateReport rep;
  rep.links = ctx.links;
  rep.solver = conic::solve(ctx.prog, settings.solver);
  if (rep.solver.diagnostics.conditioning_warning)
    rep.warnings.push_back("constraint coefficient dynamic range exceeds 1e8");
  if (rep.solver.status != conic::SolveStatus::Optimal &&
      rep.solver.status != conic::SolveStatus::Inaccurate)
    return rep;  // report carries the failed status
  const auto& x = rep.solver.primal;
  const auto& vs = ctx.vs;
  for (int j = 0; j < scene.num_targets(); ++j)
    rep.targets_est.emplace_back(x(vs.mu(2 * j)), x(vs.mu(2 * j + 1)));
  const int a0 = 2 * scene.num_targets();
  for (int i = 0; i < scene.num_anchors(); ++i)
    rep.anchors_est.emplace_back(x(vs.mu(a0 + 2 * i)), x(vs.mu(a0 + 2 * i + 1)));
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    double u = x(vs.u(static_cast<int>(l)));
    if (u < 0.0) {
      rep.clamped_links.push_back(static_cast<int>(l));
      u = 0.0;
    }
    rep.dist_est_m.push_back(std::sqrt(u));
  }
  // tightness diagnostic: eigenvalue ratio of the lifted block
  const int d = vs.mu_dim() + 1;
  Eigen::MatrixXd S(d, d);
  S(0, 0) = 1.0;
  for (int k = 0; k < vs.mu_dim(); ++k) {
    S(0, k + 1) = S(k + 1, 0) = x(vs.mu(k));
    for (int i = 0; i <= k; ++i)
      S(i + 1, k + 1) = S(k + 1, i + 1) = x(vs.kmat(i, k));
  }
  Eigen::VectorXd ev =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly)
          .eigenvalues();
  const double second = std::max(std::abs(ev(d - 2)), 1e-300);
  rep.rank1_ratio = ev(d - 1) / second;
  return rep;
}

}  // namespace

std::vector<LinkRef> enumerate_links(const model::NetworkScene& scene) {
  std::vector<LinkRef> links;
  for (int j = 0; j < scene.num_targets(); ++j) {
    for (int i : scene.target_anchor[j])
      links.push_back({model::target(j), model::anchor(i)});
    for (int i : scene.target_target[j])
      links.push_back({model::target(j), model::target(i)});
  }
  return links;
}

double estimate_beta0(const model::MeasurementSet& meas,
                      const model::NetworkScene& scene) {
  if (static_cast<int>(meas.anchor_tx_power_dbm.size()) != scene.num_anchors())
    throw std::invalid_argument("estimate_beta0: anchor transmit powers required");
  double num = 0.0, den = 0.0;
  bool any = false;
  for (int j = 0; j < scene.num_anchors(); ++j) {
    for (int i : scene.anchor_anchor[j]) {
      const auto& m = require_meas(meas, model::anchor(j), model::anchor(i));
      any = true;
      const double d = (meas.anchor_fixes.at(j).pos_m -
                        meas.anchor_fixes.at(i).pos_m)
                           .norm();
      if (d <= 0.0)
        throw std::domain_error("estimate_beta0: coincident anchor fixes");
      const double q = meas.anchor_tx_power_dbm[j] - m.p_dbm;
      const double phi = 10.0 * std::log10(d / scene.d0_m);
      const double w = 1.0 / (m.sigma_db * m.sigma_db);
      num += w * q * phi;
      den += w * phi * phi;
    }
  }
  if (!any) throw std::invalid_argument("estimate_beta0: no anchor-anchor links");
  if (den == 0.0)
    throw std::domain_error(
        "estimate_beta0: singular denominator (all anchor distances at d0)");
  return num / den;
}

EstimateReport ctup1(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const std::vector<double>& tx_power_dbm, double beta,
                     const EstimatorSettings& settings) {
  if (static_cast<int>(tx_power_dbm.size()) != scene.num_targets())
    throw std::invalid_argument("ctup1: tx_power_dbm size mismatch");
  if (beta <= 0.0) throw std::invalid_argument("ctup1: beta must be > 0");
  ProgramContext ctx = make_context(scene, false, 0, 0);
  std::vector<conic::LinExpr> residuals;
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    const auto& lk = ctx.links[l];
    const auto& m = require_meas(meas, lk.tx, lk.rx);
    const double k = model::distance_sq_from_rss(tx_power_dbm[lk.tx.index],
                                                 m.p_dbm, beta);
    const double zeta = k * (kLn10 / (5.0 * beta)) * m.sigma_db;
    conic::LinExpr r;
    r.add(ctx.vs.u(static_cast<int>(l)), 1.0 / zeta);
    r.constant = -k / zeta;
    residuals.push_back(std::move(r));
  }
  add_common_constraints(ctx, meas, scene, residuals, settings);
  add_objective(ctx, meas, true);
  return extract(ctx, scene, settings);
}

EstimateReport ctup2(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const std::vector<double>& tx_power_dbm,
                     const EstimatorSettings& settings) {
  if (static_cast<int>(tx_power_dbm.size()) != scene.num_targets())
    throw std::invalid_argument("ctup2: tx_power_dbm size mismatch");
  const double beta0 = estimate_beta0(meas, scene);
  if (beta0 <= 0.0)
    throw std::domain_error("ctup2: non-positive initial PLE estimate");
  ProgramContext ctx = make_context(scene, true, 0, 0);
  std::vector<conic::LinExpr> residuals;
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    const auto& lk = ctx.links[l];
    const auto& m = require_meas(meas, lk.tx, lk.rx);
    const double dp = tx_power_dbm[lk.tx.index] - m.p_dbm;
    const double k0 = std::pow(10.0, dp / (5.0 * beta0));
    const double tau = k0 * (kLn10 / (5.0 * beta0)) * m.sigma_db;
    const double chi = k0 * dp * kLn10 / (5.0 * beta0);
    conic::LinExpr r;
    r.add(ctx.vs.u(static_cast<int>(l)), 1.0 / tau);
    r.add(ctx.vs.epsilon(), chi / tau);
    r.constant = -k0 / tau;
    residuals.push_back(std::move(r));
  }
  add_common_constraints(ctx, meas, scene, residuals, settings);
  add_objective(ctx, meas, true);
  EstimateReport rep = extract(ctx, scene, settings);
  rep.beta0 = beta0;
  if (!rep.targets_est.empty()) {
    const double eps = rep.solver.primal(ctx.vs.epsilon());
    if (std::abs(eps) > 0.3)
      rep.warnings.push_back(
          "PLE correction |epsilon| > 0.3; linearization around beta0 suspect");
    rep.ple_est = beta0 * (1.0 + eps);
  }
  return rep;
}

EstimateReport ctup3(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene, double beta,
                     const EstimatorSettings& settings) {
  if (beta <= 0.0) throw std::invalid_argument("ctup3: beta must be > 0");
  ProgramContext ctx = make_context(scene, false, scene.num_targets(), 0);
  std::vector<conic::LinExpr> residuals;
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    const auto& lk = ctx.links[l];
    const auto& m = require_meas(meas, lk.tx, lk.rx);
    const double a = std::pow(10.0, m.p_dbm / (5.0 * beta));
    conic::LinExpr r;
    r.add(ctx.vs.u(static_cast<int>(l)), a);
    r.add(ctx.vs.g(lk.tx.index), -1.0);
    residuals.push_back(std::move(r));
  }
  add_common_constraints(ctx, meas, scene, residuals, settings);
  add_objective(ctx, meas, false);
  EstimateReport rep = extract(ctx, scene, settings);
  if (!rep.targets_est.empty()) {
    std::vector<double> p(scene.num_targets());
    for (int j = 0; j < scene.num_targets(); ++j) {
      const double g = rep.solver.primal(ctx.vs.g(j));
      if (g <= 0.0) {
        rep.warnings.push_back("power extraction failed for target " +
                               std::to_string(j) + ": g <= 0");
        p[j] = std::numeric_limits<double>::quiet_NaN();
      } else {
        p[j] = 5.0 * beta * std::log10(g);
      }
    }
    rep.power_est_dbm = std::move(p);
  }
  return rep;
}

EstimateReport ctup4(const model::MeasurementSet& meas,
                     const model::NetworkScene& scene,
                     const EstimatorSettings& settings) {
  const double beta0 = estimate_beta0(meas, scene);
  if (beta0 <= 0.0)
    throw std::domain_error("ctup4: non-positive initial PLE estimate");
  ProgramContext ctx =
      make_context(scene, false, scene.num_targets(), scene.num_targets());
  std::vector<conic::LinExpr> residuals;
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    const auto& lk = ctx.links[l];
    const auto& m = require_meas(meas, lk.tx, lk.rx);
    const double a0 = std::pow(10.0, m.p_dbm / (5.0 * beta0));
    conic::LinExpr r;
    r.add(ctx.vs.u(static_cast<int>(l)), a0);
    r.add(ctx.vs.g(lk.tx.index), -1.0);
    r.add(ctx.vs.r(lk.tx.index), 1.0);
    residuals.push_back(std::move(r));
  }
  add_common_constraints(ctx, meas, scene, residuals, settings);
  add_objective(ctx, meas, false);
  EstimateReport rep = extract(ctx, scene, settings);
  rep.beta0 = beta0;
  if (rep.targets_est.empty()) return rep;

  std::vector<RefineLink> rl;
  bool excluded = false;
  for (size_t l = 0; l < ctx.links.size(); ++l) {
    const auto& lk = ctx.links[l];
    const auto& m = require_meas(meas, lk.tx, lk.rx);
    rl.push_back({lk.tx.index, m.p_dbm, rep.dist_est_m[l],
                  1.0 / (m.sigma_db * m.sigma_db)});
    if (rep.dist_est_m[l] <= 0.0) excluded = true;
  }
  if (excluded)
    rep.warnings.push_back(
        "links with zero estimated distance excluded from refinement");
  std::vector<double> p_hat = refine_power(rl, beta0, scene.num_targets());
  rep.ple_est = refine_ple(rl, p_hat);
  rep.power_est_dbm = std::move(p_hat);
  return rep;
}

EstimateReport run_estimator(model::Scenario scenario,
                             const model::MeasurementSet& meas,
                             const model::NetworkScene& scene,
                             const std::vector<double>& known_power_dbm,
                             double known_beta,
                             const EstimatorSettings& settings) {
  switch (scenario.id()) {
    case 1: return ctup1(meas, scene, known_power_dbm, known_beta, settings);
    case 2: return ctup2(meas, scene, known_power_dbm, settings);
    case 3: return ctup3(meas, scene, known_beta, settings);
    default: return ctup4(meas, scene, settings);
  }
}

std::vector<double> refine_power(const std::vector<RefineLink>& links,
                                 double beta0, int n_targets) {
  std::vector<double> num(n_targets, 0.0), den(n_targets, 0.0);
  for (const auto& l : links) {
    if (l.target < 0 || l.target >= n_targets)
      throw std::invalid_argument("refine_power: target index out of range");
    if (l.d_hat_m <= 0.0) continue;
    const double h = l.p_rx_dbm + 10.0 * beta0 * std::log10(l.d_hat_m);
    num[l.target] += l.weight * h;
    den[l.target] += l.weight;
  }
  std::vector<double> p(n_targets);
  for (int j = 0; j < n_targets; ++j) {
    if (den[j] == 0.0)
      throw std::domain_error("refine_power: no usable link for target " +
                              std::to_string(j));
    p[j] = num[j] / den[j];
  }
  return p;
}

double refine_ple(const std::vector<RefineLink>& links,
                  const std::vector<double>& p_hat_dbm) {
  double num = 0.0, den = 0.0;
  for (const auto& l : links) {
    if (l.d_hat_m <= 0.0) continue;
    const double q = p_hat_dbm.at(l.target) - l.p_rx_dbm;
    const double phi = 10.0 * std::log10(l.d_hat_m);
    num += l.weight * q * phi;
    den += l.weight * phi * phi;
  }
  if (den == 0.0)
    throw std::domain_error("refine_ple: singular denominator (all d_hat at 1 m)");
  return num / den;
}

}  // namespace ctup::estimators
