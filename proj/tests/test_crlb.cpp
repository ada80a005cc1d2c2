#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "ctup/crlb.hpp"
#include "ctup/model.hpp"

using namespace ctup;
using namespace ctup::crlb;

namespace {

model::NetworkScene random_scene(int na, int nt, unsigned seed,
                                 double area = 30.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, area);
  model::NetworkScene sc;
  for (int i = 0; i < na; ++i) sc.anchors_true.push_back({u(rng), u(rng)});
  for (int j = 0; j < nt; ++j) sc.targets_true.push_back({u(rng), u(rng)});
  sc.tx_power_dbm.assign(nt, 0.0);
  sc.ple = 3.0;
  sc.make_fully_connected();
  return sc;
}

// Mean received power of one target-transmitted reading as a function of the
// packed parameter vector; used by the finite-difference oracle below.
double link_mean(const model::ParameterVector& pv, const model::RssMeasurement& m) {
  const Eigen::Vector2d tj = pv.target_pos(m.tx.index);
  const Eigen::Vector2d other = m.rx.kind == model::NodeId::Kind::Anchor
                                    ? pv.anchor_pos(m.rx.index)
                                    : pv.target_pos(m.rx.index);
  return pv.power(m.tx.index) -
         10.0 * pv.ple() * std::log10((tj - other).norm());
}

// Independent FIM oracle: F = sum sigma^-2 (d mean/d theta)(d mean/d theta)^T
// + anchor priors, with the gradients taken by central differences instead of
// the closed-form c-vectors.
Eigen::MatrixXd fim_fd(const model::NetworkScene& sc,
                       const model::MeasurementSet& ms, model::Scenario scn) {
  auto pv = model::ParameterVector::from_scene(sc);
  const int nt = sc.num_targets(), na = sc.num_anchors();
  std::vector<int> cols;
  for (int k = 0; k < 2 * nt + 2 * na; ++k) cols.push_back(k);
  if (!scn.knows_power)
    for (int j = 0; j < nt; ++j) cols.push_back(2 * nt + 2 * na + j);
  if (!scn.knows_ple) cols.push_back(static_cast<int>(pv.theta.size()) - 1);
  const int dim = static_cast<int>(cols.size());
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(dim, dim);
  const double h = 1e-6;
  for (const auto& m : ms.rss) {
    if (m.tx.kind != model::NodeId::Kind::Target) continue;
    Eigen::VectorXd g(dim);
    for (int k = 0; k < dim; ++k) {
      auto plus = pv, minus = pv;
      plus.theta(cols[k]) += h;
      minus.theta(cols[k]) -= h;
      g(k) = (link_mean(plus, m) - link_mean(minus, m)) / (2.0 * h);
    }
    F.noalias() += g * g.transpose() / (m.sigma_db * m.sigma_db);
  }
  for (int i = 0; i < na; ++i) {
    const double dl = ms.anchor_fixes[i].delta_m;
    F.block<2, 2>(2 * nt + 2 * i, 2 * nt + 2 * i) +=
        Eigen::Matrix2d::Identity() / (dl * dl);
  }
  return F;
}

}  // namespace

TEST_CASE("single-link FIM matches the hand formula and is singular") {
  const double d = 7.0, beta = 2.5, sigma = 1.3;
  model::NetworkScene sc;
  sc.anchors_true = {{d, 0.0}};
  sc.targets_true = {{0.0, 0.0}};
  sc.tx_power_dbm = {0.0};
  sc.ple = beta;
  sc.make_fully_connected();

  auto fim = build_fim(sc, sigma, 1.0, model::Scenario{true, true},
                       /*exact_anchors=*/true);
  REQUIRE(fim.dim() == 2);
  const double cx = 10.0 * beta / std::numbers::ln10 / d;
  CHECK(fim.F(0, 0) == doctest::Approx(cx * cx / (sigma * sigma)));
  CHECK(fim.F(0, 1) == doctest::Approx(0.0));
  CHECK(fim.F(1, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(crlb::crlb(fim), std::runtime_error);
}

TEST_CASE("FIM matches a finite-difference gradient oracle") {
  auto sc = random_scene(3, 2, 11);
  model::MeasurementSet ms;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> us(0.8, 2.5);
  for (int j = 0; j < sc.num_targets(); ++j) {
    for (int i : sc.target_anchor[j])
      ms.rss.push_back({model::target(j), model::anchor(i), 0.0, us(rng)});
    for (int i : sc.target_target[j])
      ms.rss.push_back({model::target(j), model::target(i), 0.0, us(rng)});
  }
  for (const auto& s : sc.anchors_true) ms.anchor_fixes.push_back({s, us(rng)});

  for (int id = 1; id <= 4; ++id) {
    CAPTURE(id);
    const auto scn = model::Scenario::from_id(id);
    auto fim = build_fim(sc, ms, scn);
    const Eigen::MatrixXd Ffd = fim_fd(sc, ms, scn);
    CHECK((fim.F - Ffd).norm() / Ffd.norm() < 1e-7);
  }
}

TEST_CASE("CRLB against a direct 2x2 inversion") {
  model::NetworkScene sc;
  sc.anchors_true = {{0.0, 0.0}, {12.0, 1.0}, {5.0, 10.0}};
  sc.targets_true = {{6.0, 4.0}};
  sc.tx_power_dbm = {0.0};
  sc.ple = 3.0;
  sc.make_fully_connected();

  auto fim = build_fim(sc, 1.0, 1.0, model::Scenario{true, true},
                       /*exact_anchors=*/true);
  REQUIRE(fim.dim() == 2);
  const Eigen::Matrix2d F = fim.F;
  const double det = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
  const double tr_inv = (F(0, 0) + F(1, 1)) / det;
  auto rep = crlb::crlb(fim);
  CHECK(rep.crlb_t_m == doctest::Approx(std::sqrt(tr_inv)).epsilon(1e-10));
  CHECK(!rep.crlb_p_dbm.has_value());
  CHECK(!rep.crlb_beta.has_value());
}

TEST_CASE("sigma scaling is linear with exact anchors") {
  auto sc = random_scene(4, 3, 21);
  for (double k : {2.0, 5.0}) {
    auto r1 = crlb::crlb(build_fim(sc, 1.0, 1.0, model::Scenario{true, true}, true));
    auto rk = crlb::crlb(build_fim(sc, k, 1.0, model::Scenario{true, true}, true));
    CHECK(rk.crlb_t_m == doctest::Approx(k * r1.crlb_t_m).epsilon(1e-9));
  }
}

TEST_CASE("full-scenario FIM dimension is 3 N_t + 2 N_a + 1") {
  auto sc = random_scene(5, 10, 31, 100.0);
  auto fim = build_fim(sc, 3.0, 1.0, model::Scenario{false, false});
  CHECK(fim.dim() == 41);
  CHECK(fim.power_offset() == 30);
  CHECK(fim.ple_offset() == 40);
  auto rep = crlb::crlb(fim);
  CHECK(rep.crlb_t_m > 0.0);
  REQUIRE(rep.crlb_p_dbm.has_value());
  REQUIRE(rep.crlb_beta.has_value());
}

TEST_CASE("scenario nesting: more unknowns never lower the position bound") {
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    CAPTURE(seed);
    auto sc = random_scene(5, 4, seed, 50.0);
    double t[5] = {0, 0, 0, 0, 0};
    for (int id = 1; id <= 4; ++id)
      t[id] = crlb::crlb(build_fim(sc, 2.0, 1.0, model::Scenario::from_id(id)))
                  .crlb_t_m;
    const double slack = 1e-10;
    CHECK(t[2] >= t[1] - slack);
    CHECK(t[3] >= t[1] - slack);
    CHECK(t[4] >= t[2] - slack);
    CHECK(t[4] >= t[3] - slack);
  }
}

TEST_CASE("adding a link never increases any bound") {
  for (unsigned seed : {7u, 8u, 9u}) {
    CAPTURE(seed);
    auto sc = random_scene(4, 3, seed, 50.0);
    auto trimmed = sc;
    // drop one target-target link (keep the scene localizable)
    REQUIRE(!trimmed.target_target[0].empty());
    trimmed.target_target[0].pop_back();
    const auto scn = model::Scenario{false, false};
    auto full = crlb::crlb(build_fim(sc, 2.0, 1.5, scn));
    auto less = crlb::crlb(build_fim(trimmed, 2.0, 1.5, scn));
    CHECK(full.crlb_t_m <= less.crlb_t_m + 1e-10);
    CHECK(*full.crlb_p_dbm <= *less.crlb_p_dbm + 1e-10);
    CHECK(*full.crlb_beta <= *less.crlb_beta + 1e-10);
  }
}

TEST_CASE("position bound is invariant to rigid motions of the scene") {
  auto sc = random_scene(5, 3, 13, 40.0);
  const auto scn = model::Scenario{false, false};
  const double base = crlb::crlb(build_fim(sc, 2.0, 1.0, scn)).crlb_t_m;

  auto shifted = sc;
  for (auto& p : shifted.anchors_true) p += Eigen::Vector2d(123.4, -77.0);
  for (auto& p : shifted.targets_true) p += Eigen::Vector2d(123.4, -77.0);
  CHECK(crlb::crlb(build_fim(shifted, 2.0, 1.0, scn)).crlb_t_m ==
        doctest::Approx(base).epsilon(1e-8));

  auto rotated = sc;
  const double a = 0.7;
  Eigen::Matrix2d R;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  for (auto& p : rotated.anchors_true) p = R * p;
  for (auto& p : rotated.targets_true) p = R * p;
  CHECK(crlb::crlb(build_fim(rotated, 2.0, 1.0, scn)).crlb_t_m ==
        doctest::Approx(base).epsilon(1e-8));
}

TEST_CASE("swapping target labels permutes the FIM blocks") {
  auto sc = random_scene(4, 2, 17);
  auto swapped = sc;
  std::swap(swapped.targets_true[0], swapped.targets_true[1]);
  const auto scn = model::Scenario{false, false};
  auto f1 = build_fim(sc, 2.0, 1.0, scn);
  auto f2 = build_fim(swapped, 2.0, 1.0, scn);
  // permutation exchanging target 0 <-> 1 position and power entries
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(f1.dim(), f1.dim());
  P(0, 0) = P(1, 1) = P(2, 2) = P(3, 3) = 0.0;
  P(0, 2) = P(1, 3) = P(2, 0) = P(3, 1) = 1.0;
  const int po = f1.power_offset();
  P(po, po) = P(po + 1, po + 1) = 0.0;
  P(po, po + 1) = P(po + 1, po) = 1.0;
  CHECK((P * f1.F * P.transpose() - f2.F).norm() < 1e-9 * f1.F.norm());
}
