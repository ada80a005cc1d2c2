#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ctup/dataio.hpp"

using namespace ctup;
using namespace ctup::dataio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// A small consistent dataset: 3 anchors, 1 target, repeated readings.
void write_sample(const fs::path& dir) {
  write(dir / "nodes.csv",
        "node_id,role,tx_power_dbm\n"
        "a1,anchor,0\n"
        "a2,anchor,0\n"
        "a3,anchor,0\n"
        "t1,target,-3\n");
  // truth placed around lat 45 via the projection inverse used in the lib
  GeoFix origin;
  origin.lat_deg = 45.0;
  origin.lon_deg = 7.0;
  const Eigen::Vector2d pos[4] = {
      {0.0, 0.0}, {40.0, 5.0}, {10.0, 35.0}, {-12.5, -10.0}};
  std::string gps = "node_id,lat_deg,lon_deg,source\n";
  const char* names[4] = {"a1", "a2", "a3", "t1"};
  char buf[160];
  auto add = [&](const char* id, const Eigen::Vector2d& p, const char* src) {
    const GeoFix g = local_to_geo(p, origin);
    std::snprintf(buf, sizeof buf, "%s,%.15g,%.15g,%s\n", id, g.lat_deg,
                  g.lon_deg, src);
    gps += buf;
  };
  for (int k = 0; k < 4; ++k) add(names[k], pos[k], "rtk");
  // two std fixes per anchor, +-(1,1)/sqrt(2) around a 0.5 m offset mean
  for (int k = 0; k < 3; ++k) {
    add(names[k], pos[k] + Eigen::Vector2d{0.5 + std::numbers::sqrt2 / 2.0,
                                           std::numbers::sqrt2 / 2.0},
        "std");
    add(names[k], pos[k] + Eigen::Vector2d{0.5 - std::numbers::sqrt2 / 2.0,
                                           -std::numbers::sqrt2 / 2.0},
        "std");
  }
  write(dir / "gps.csv", gps);
  std::string rss = "tx_id,rx_id,rssi_dbm,timestamp\n";
  // three readings per target-anchor link: mean -40+k, sample std 2
  for (int k = 0; k < 3; ++k) {
    const double m = -40.0 + k;
    std::snprintf(buf, sizeof buf, "t1,%s,%g,0\nt1,%s,%g,1\nt1,%s,%g,2\n",
                  names[k], m - 2.0, names[k], m, names[k], m + 2.0);
    rss += buf;
  }
  rss += "a1,a2,-55,\na1,a2,-57,\n";  // one anchor-anchor link
  write(dir / "rss.csv", rss);
}

}  // namespace

TEST_CASE("geo_to_local basics and inverse") {
  GeoFix origin;
  origin.lat_deg = 45.0;
  origin.lon_deg = 7.0;
  GeoFix north = origin;
  north.lat_deg += 1.0 / 6371000.0 / (std::numbers::pi / 180.0);
  auto pts = geo_to_local({origin, north}, origin);
  CHECK(pts[0].norm() == doctest::Approx(0.0));
  CHECK(pts[1].x() == doctest::Approx(0.0));
  CHECK(pts[1].y() == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-300.0, 300.0);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d p{u(rng), u(rng)};
    auto back = geo_to_local({local_to_geo(p, origin)}, origin);
    CHECK((back[0] - p).norm() < 1e-9);
  }

  std::vector<std::string> warnings;
  GeoFix far = local_to_geo({20000.0, 0.0}, origin);
  geo_to_local({far}, origin, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("small-area") != std::string::npos);
}

TEST_CASE("fit_pathloss recovers exact synthetic data") {
  const double p0 = -3.59, beta = 3.27;
  std::vector<PathlossPoint> pts;
  for (double d : {5.0, 12.0, 25.0, 40.0, 86.23, 120.0, 200.0, 320.0})
    pts.push_back({d, p0 - 10.0 * beta * std::log10(d)});
  auto fit = fit_pathloss(pts);
  CHECK(fit.ple == doctest::Approx(beta).epsilon(1e-12));
  CHECK(fit.p0_dbm == doctest::Approx(p0).epsilon(1e-10));
  CHECK(fit.residual_std_db == doctest::Approx(0.0));
  CHECK(fit.r_squared == doctest::Approx(1.0));

  // constant offset moves the intercept only
  for (auto& p : pts) p.rssi_dbm += 7.5;
  auto shifted = fit_pathloss(pts);
  CHECK(shifted.ple == doctest::Approx(beta).epsilon(1e-12));
  CHECK(shifted.p0_dbm == doctest::Approx(p0 + 7.5).epsilon(1e-10));
}

TEST_CASE("fit_pathloss equals the normal-equations oracle on noisy data") {
  std::mt19937 rng(9);
  std::normal_distribution<double> noise(0.0, 2.47);
  std::uniform_real_distribution<double> ud(2.0, 300.0);
  std::vector<PathlossPoint> pts;
  for (int k = 0; k < 60; ++k) {
    const double d = ud(rng);
    pts.push_back({d, -3.59 - 32.7 * std::log10(d) + noise(rng)});
  }
  auto fit = fit_pathloss(pts);

  Eigen::MatrixXd X(pts.size(), 2);
  Eigen::VectorXd y(pts.size());
  for (size_t k = 0; k < pts.size(); ++k) {
    X(k, 0) = 1.0;
    X(k, 1) = std::log10(pts[k].d_m);
    y(k) = pts[k].rssi_dbm;
  }
  const Eigen::Vector2d sol =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK(fit.p0_dbm == doctest::Approx(sol(0)).epsilon(1e-10));
  CHECK(fit.ple == doctest::Approx(-sol(1) / 10.0).epsilon(1e-10));
}

TEST_CASE("fit_pathloss input validation") {
  CHECK_THROWS_AS(fit_pathloss({{1.0, 0.0}, {2.0, -3.0}}), std::runtime_error);
  CHECK_THROWS_AS(
      fit_pathloss({{5.0, -1.0}, {5.0, -2.0}, {5.0, -3.0}}),
      std::runtime_error);
  CHECK_THROWS_AS(
      fit_pathloss({{0.0, -1.0}, {2.0, -2.0}, {5.0, -3.0}}),
      std::runtime_error);
}

TEST_CASE("histogram_pdf follows Sturges and normalizes") {
  std::vector<double> v(100);
  std::mt19937 rng(4);
  std::normal_distribution<double> n01;
  for (auto& x : v) x = n01(rng);
  auto h = histogram_pdf(v);
  CHECK(h.densities.size() == 8);  // ceil(1 + log2(100))
  double integral = 0.0;
  for (size_t b = 0; b < h.densities.size(); ++b)
    integral += h.densities[b] * (h.bin_edges[b + 1] - h.bin_edges[b]);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(histogram_pdf({1.0, 2.0}).densities.size() == 2);
  CHECK(histogram_pdf(v, 5).densities.size() == 5);
  CHECK_THROWS_AS(histogram_pdf({}), std::invalid_argument);
}

TEST_CASE("load_dataset aggregates readings and fixes") {
  TempDir dir("ctup_dataio_load");
  write_sample(dir.path);
  auto ds = load_dataset(dir.path.string());

  REQUIRE(ds.scene.num_anchors() == 3);
  REQUIRE(ds.scene.num_targets() == 1);
  CHECK(ds.targets_have_power);
  CHECK(ds.scene.tx_power_dbm[0] == -3.0);

  // truth is re-centered on the RTK centroid
  Eigen::Vector2d centroid{(0.0 + 40.0 + 10.0 - 12.5) / 4.0,
                           (0.0 + 5.0 + 35.0 - 10.0) / 4.0};
  CHECK((ds.scene.anchors_true[1] -
         (Eigen::Vector2d{40.0, 5.0} - centroid))
            .norm() < 1e-3);
  CHECK((ds.scene.targets_true[0] -
         (Eigen::Vector2d{-12.5, -10.0} - centroid))
            .norm() < 1e-3);

  // anchor fixes: mean offset 0.5 m east, delta 1 m from the +-(1,1)/sqrt(2)
  for (int i = 0; i < 3; ++i) {
    CHECK((ds.meas.anchor_fixes[i].pos_m - ds.scene.anchors_true[i] -
           Eigen::Vector2d{0.5, 0.0})
              .norm() < 1e-3);
    CHECK(ds.meas.anchor_fixes[i].delta_m == doctest::Approx(1.0).epsilon(1e-4));
  }

  // per-link aggregation: mean of {-42,-40,-38} and sample std 2
  const auto* m = ds.meas.find(model::target(0), model::anchor(0));
  REQUIRE(m != nullptr);
  CHECK(m->p_dbm == doctest::Approx(-40.0));
  CHECK(m->sigma_db == doctest::Approx(2.0));

  // the anchor-anchor pair appears with its own stats
  const auto* aa = ds.meas.find(model::anchor(0), model::anchor(1));
  REQUIRE(aa != nullptr);
  CHECK(aa->p_dbm == doctest::Approx(-56.0));
  REQUIRE(ds.meas.anchor_tx_power_dbm.size() == 3);
}

TEST_CASE("save/load round trip preserves the dataset") {
  TempDir dir("ctup_dataio_rt1");
  write_sample(dir.path);
  auto ds = load_dataset(dir.path.string());

  TempDir dir2("ctup_dataio_rt2");
  save_dataset(ds, dir2.path.string());
  auto back = load_dataset(dir2.path.string());

  REQUIRE(back.scene.num_anchors() == ds.scene.num_anchors());
  REQUIRE(back.scene.num_targets() == ds.scene.num_targets());
  for (int i = 0; i < 3; ++i) {
    CHECK((back.scene.anchors_true[i] - ds.scene.anchors_true[i]).norm() <
          1e-6);
    CHECK((back.meas.anchor_fixes[i].pos_m - ds.meas.anchor_fixes[i].pos_m)
              .norm() < 1e-3);
    CHECK(back.meas.anchor_fixes[i].delta_m ==
          doctest::Approx(ds.meas.anchor_fixes[i].delta_m).epsilon(1e-4));
  }
  REQUIRE(back.meas.rss.size() == ds.meas.rss.size());
  for (const auto& m : ds.meas.rss) {
    const auto* bm = back.meas.find(m.tx, m.rx);
    REQUIRE(bm != nullptr);
    CHECK(bm->p_dbm == doctest::Approx(m.p_dbm).epsilon(1e-9));
    CHECK(bm->sigma_db == doctest::Approx(m.sigma_db).epsilon(1e-9));
  }
  CHECK(back.scene.tx_power_dbm == ds.scene.tx_power_dbm);
  CHECK(back.meas.anchor_tx_power_dbm == ds.meas.anchor_tx_power_dbm);
}

TEST_CASE("malformed inputs produce line-numbered diagnostics") {
  TempDir dir("ctup_dataio_bad");

  auto expect_error = [&](const std::string& needle) {
    try {
      load_dataset(dir.path.string());
      FAIL_CHECK("expected an error mentioning: " << needle);
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  write_sample(dir.path);
  write(dir.path / "rss.csv",
        "tx_id,rx_id,rssi_dbm,timestamp\nt1,a1,not_a_number,\n");
  expect_error("rss.csv:2");

  write_sample(dir.path);
  write(dir.path / "rss.csv", "tx_id,rx_id,rssi_dbm,timestamp\nt1,ghost,-40,\n");
  expect_error("unknown rx node id");

  write_sample(dir.path);
  write(dir.path / "gps.csv", "wrong,header\n");
  expect_error("expected header");

  write_sample(dir.path);
  write(dir.path / "nodes.csv",
        "node_id,role,tx_power_dbm\na1,anchor,0\na1,anchor,0\n");
  expect_error("duplicate node id");
}
