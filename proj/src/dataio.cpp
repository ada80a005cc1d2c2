#include "ctup/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ctup::dataio {

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;
// Reference geodetic origin used when writing datasets; loading re-centers
// on the RTK centroid, so the absolute values only need to be plausible.
constexpr double kSaveLatDeg = 45.0;
constexpr double kSaveLonDeg = 7.0;

[[noreturn]] void fail(const std::string& file, int line,
                       const std::string& what) {
  throw std::runtime_error(file + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& file, int line,
                 const char* field) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v))
      fail(file, line, std::string("invalid number in ") + field + ": \"" + s +
                           "\"");
    return v;
  } catch (const std::invalid_argument&) {
    fail(file, line,
         std::string("invalid number in ") + field + ": \"" + s + "\"");
  } catch (const std::out_of_range&) {
    fail(file, line,
         std::string("number out of range in ") + field + ": \"" + s + "\"");
  }
}

/// Reads a CSV file, validates the header, and hands rows to `row_fn` as
/// (line number, fields).
template <typename F>
void read_csv(const std::string& path, const std::string& header, F row_fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw std::runtime_error(path + ":1: expected header \"" + header +
                             "\", got \"" + line + "\"");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    row_fn(lineno, split_csv(line));
  }
}

double aggregate(std::vector<double> v, bool median) {
  if (!median) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_std(const std::vector<double>& v) {
  const double m = aggregate(v, false);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string num(double v, const char* fmt = "%.12g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<Eigen::Vector2d> geo_to_local(const std::vector<GeoFix>& fixes,
                                          const GeoFix& origin,
                                          std::vector<std::string>* warnings) {
  const double coslat = std::cos(origin.lat_deg * kDegToRad);
  std::vector<Eigen::Vector2d> out;
  double extent = 0.0;
  for (const auto& f : fixes) {
    const double east =
        kEarthRadiusM * (f.lon_deg - origin.lon_deg) * kDegToRad * coslat;
    const double north = kEarthRadiusM * (f.lat_deg - origin.lat_deg) * kDegToRad;
    out.push_back({east, north});
    extent = std::max(extent, out.back().norm());
  }
  if (extent > 10000.0 && warnings)
    warnings->push_back(
        "geo_to_local: extent " + num(extent) +
        " m exceeds the small-area assumption of the projection");
  return out;
}

GeoFix local_to_geo(const Eigen::Vector2d& pos_m, const GeoFix& origin) {
  GeoFix f;
  const double coslat = std::cos(origin.lat_deg * kDegToRad);
  f.lat_deg = origin.lat_deg + pos_m.y() / kEarthRadiusM / kDegToRad;
  f.lon_deg = origin.lon_deg + pos_m.x() / (kEarthRadiusM * coslat) / kDegToRad;
  return f;
}

Dataset load_dataset(const std::string& dir, const LoadOptions& opts) {
  Dataset ds;
  const std::string nodes_path = dir + "/nodes.csv";
  const std::string gps_path = dir + "/gps.csv";
  const std::string rss_path = dir + "/rss.csv";

  // nodes.csv: roles, indices (file order), and declared powers
  struct NodeDecl {
    bool is_anchor{false};
    int index{0};
    std::optional<double> power_dbm;
  };
  std::map<std::string, NodeDecl> nodes;
  read_csv(nodes_path, "node_id,role,tx_power_dbm",
           [&](int line, const std::vector<std::string>& f) {
             if (f.size() != 3) fail(nodes_path, line, "expected 3 fields");
             if (nodes.count(f[0]))
               fail(nodes_path, line, "duplicate node id \"" + f[0] + "\"");
             NodeDecl d;
             if (f[1] == "anchor")
               d.is_anchor = true;
             else if (f[1] != "target")
               fail(nodes_path, line,
                    "role must be anchor or target, got \"" + f[1] + "\"");
             if (!f[2].empty())
               d.power_dbm = parse_num(f[2], nodes_path, line, "tx_power_dbm");
             d.index = d.is_anchor ? static_cast<int>(ds.anchor_names.size())
                                   : static_cast<int>(ds.target_names.size());
             (d.is_anchor ? ds.anchor_names : ds.target_names).push_back(f[0]);
             nodes.emplace(f[0], d);
           });
  const int na = static_cast<int>(ds.anchor_names.size());
  const int nt = static_cast<int>(ds.target_names.size());
  if (nt == 0) throw std::runtime_error(nodes_path + ": no target nodes");
  if (na == 0) throw std::runtime_error(nodes_path + ": no anchor nodes");

  // gps.csv
  std::vector<GeoFix> rtk;
  std::map<std::string, std::vector<GeoFix>> std_fixes;
  read_csv(gps_path, "node_id,lat_deg,lon_deg,source",
           [&](int line, const std::vector<std::string>& f) {
             if (f.size() != 4) fail(gps_path, line, "expected 4 fields");
             if (!nodes.count(f[0]))
               fail(gps_path, line, "unknown node id \"" + f[0] + "\"");
             GeoFix g;
             g.node_id = f[0];
             g.lat_deg = parse_num(f[1], gps_path, line, "lat_deg");
             g.lon_deg = parse_num(f[2], gps_path, line, "lon_deg");
             if (std::abs(g.lat_deg) > 90.0 || std::abs(g.lon_deg) > 180.0)
               fail(gps_path, line, "lat/lon out of range");
             if (f[3] == "rtk")
               g.source = GeoFix::Source::RtkGps;
             else if (f[3] == "std")
               g.source = GeoFix::Source::StdGps;
             else
               fail(gps_path, line,
                    "source must be std or rtk, got \"" + f[3] + "\"");
             if (g.source == GeoFix::Source::RtkGps)
               rtk.push_back(g);
             else
               std_fixes[f[0]].push_back(g);
           });
  if (rtk.empty())
    throw std::runtime_error(gps_path + ": no RTK ground-truth fixes");

  GeoFix origin;
  for (const auto& g : rtk) {
    origin.lat_deg += g.lat_deg / static_cast<double>(rtk.size());
    origin.lon_deg += g.lon_deg / static_cast<double>(rtk.size());
  }

  // ground truth from RTK (averaging repeated fixes per node)
  std::map<std::string, Eigen::Vector2d> truth;
  std::map<std::string, int> truth_n;
  {
    auto local = geo_to_local(rtk, origin, &ds.warnings);
    for (size_t k = 0; k < rtk.size(); ++k) {
      auto [it, fresh] =
          truth.try_emplace(rtk[k].node_id, Eigen::Vector2d::Zero());
      it->second += local[k];
      ++truth_n[rtk[k].node_id];
    }
    for (auto& [id, p] : truth) p /= truth_n[id];
  }
  ds.scene.anchors_true.resize(na);
  ds.scene.targets_true.resize(nt);
  for (const auto& [id, decl] : nodes) {
    auto it = truth.find(id);
    if (it == truth.end())
      throw std::runtime_error(gps_path + ": node \"" + id +
                               "\" has no RTK ground-truth fix");
    (decl.is_anchor ? ds.scene.anchors_true[decl.index]
                    : ds.scene.targets_true[decl.index]) = it->second;
  }

  // anchor fixes from standard GPS, per-anchor delta from repeated fixes
  ds.meas.anchor_fixes.resize(na);
  std::vector<std::optional<double>> deltas(na);
  std::vector<double> pooled;
  for (int i = 0; i < na; ++i) {
    const auto& name = ds.anchor_names[i];
    auto it = std_fixes.find(name);
    if (it == std_fixes.end()) {
      ds.warnings.push_back("anchor \"" + name +
                            "\" has no standard-GPS fix; using RTK truth");
      ds.meas.anchor_fixes[i].pos_m = ds.scene.anchors_true[i];
      continue;
    }
    auto local = geo_to_local(it->second, origin, &ds.warnings);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : local) mean += p;
    mean /= static_cast<double>(local.size());
    ds.meas.anchor_fixes[i].pos_m = mean;
    if (local.size() >= 2) {
      double ss = 0.0;
      for (const auto& p : local) ss += (p - mean).squaredNorm();
      deltas[i] = std::sqrt(ss / (2.0 * static_cast<double>(local.size() - 1)));
      pooled.push_back(*deltas[i]);
    }
  }
  double delta_default = 1.0;
  if (!pooled.empty())
    delta_default = aggregate(pooled, false);
  else
    ds.warnings.push_back(
        "no anchor has repeated standard-GPS fixes; delta defaults to 1 m");
  for (int i = 0; i < na; ++i)
    ds.meas.anchor_fixes[i].delta_m = deltas[i] ? *deltas[i] : delta_default;

  // rss.csv, aggregated per directed link
  std::map<std::pair<std::string, std::string>, std::vector<double>> readings;
  read_csv(rss_path, "tx_id,rx_id,rssi_dbm,timestamp",
           [&](int line, const std::vector<std::string>& f) {
             if (f.size() != 4) fail(rss_path, line, "expected 4 fields");
             if (!nodes.count(f[0]))
               fail(rss_path, line, "unknown tx node id \"" + f[0] + "\"");
             if (!nodes.count(f[1]))
               fail(rss_path, line, "unknown rx node id \"" + f[1] + "\"");
             if (f[0] == f[1]) fail(rss_path, line, "self link");
             const double rssi = parse_num(f[2], rss_path, line, "rssi_dbm");
             if (!f[3].empty()) parse_num(f[3], rss_path, line, "timestamp");
             readings[{f[0], f[1]}].push_back(rssi);
           });
  if (readings.empty()) throw std::runtime_error(rss_path + ": no readings");

  std::vector<double> sigma_pool;
  for (const auto& [key, vals] : readings)
    if (vals.size() >= 2) sigma_pool.push_back(sample_std(vals));
  double sigma_default = 1.0;
  if (!sigma_pool.empty())
    sigma_default = aggregate(sigma_pool, false);
  else
    ds.warnings.push_back(
        "no link has repeated readings; sigma defaults to 1 dB");

  ds.scene.target_anchor.assign(nt, {});
  ds.scene.target_target.assign(nt, {});
  ds.scene.anchor_anchor.assign(na, {});
  bool have_anchor_links = false;
  for (const auto& [key, vals] : readings) {
    const auto& tx = nodes.at(key.first);
    const auto& rx = nodes.at(key.second);
    if (tx.is_anchor && !rx.is_anchor) {
      ds.warnings.push_back("ignoring anchor-to-target reading " + key.first +
                            " -> " + key.second +
                            " (outside the measurement model)");
      continue;
    }
    model::RssMeasurement m;
    m.tx = tx.is_anchor ? model::anchor(tx.index) : model::target(tx.index);
    m.rx = rx.is_anchor ? model::anchor(rx.index) : model::target(rx.index);
    m.p_dbm = aggregate(vals, opts.median);
    m.sigma_db = vals.size() >= 2 ? sample_std(vals) : sigma_default;
    if (m.sigma_db <= 0.0) m.sigma_db = sigma_default;
    ds.meas.rss.push_back(m);
    if (!tx.is_anchor && rx.is_anchor)
      ds.scene.target_anchor[tx.index].push_back(rx.index);
    else if (!tx.is_anchor)
      ds.scene.target_target[tx.index].push_back(rx.index);
    else {
      ds.scene.anchor_anchor[tx.index].push_back(rx.index);
      have_anchor_links = true;
    }
  }

  if (have_anchor_links) {
    ds.meas.anchor_tx_power_dbm.resize(na);
    for (int i = 0; i < na; ++i) {
      const auto& decl = nodes.at(ds.anchor_names[i]);
      if (!decl.power_dbm)
        throw std::runtime_error(nodes_path + ": anchor \"" +
                                 ds.anchor_names[i] +
                                 "\" needs tx_power_dbm (anchor-anchor links "
                                 "are present)");
      ds.meas.anchor_tx_power_dbm[i] = *decl.power_dbm;
    }
  }

  ds.targets_have_power = true;
  ds.scene.tx_power_dbm.assign(nt, 0.0);
  for (int j = 0; j < nt; ++j) {
    const auto& decl = nodes.at(ds.target_names[j]);
    if (decl.power_dbm)
      ds.scene.tx_power_dbm[j] = *decl.power_dbm;
    else
      ds.targets_have_power = false;
  }

  ds.scene.validate();
  ds.meas.validate(ds.scene);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  const int na = ds.scene.num_anchors();
  const int nt = ds.scene.num_targets();
  if (static_cast<int>(ds.anchor_names.size()) != na ||
      static_cast<int>(ds.target_names.size()) != nt)
    throw std::invalid_argument("save_dataset: name/scene size mismatch");

  // center the written coordinates so that loading (which re-centers on the
  // RTK centroid) reproduces the same local frame
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : ds.scene.anchors_true) centroid += p;
  for (const auto& p : ds.scene.targets_true) centroid += p;
  centroid /= static_cast<double>(na + nt);
  GeoFix origin;
  origin.lat_deg = kSaveLatDeg;
  origin.lon_deg = kSaveLonDeg;

  std::ofstream nodesf(dir + "/nodes.csv");
  std::ofstream gpsf(dir + "/gps.csv");
  std::ofstream rssf(dir + "/rss.csv");
  if (!nodesf || !gpsf || !rssf)
    throw std::runtime_error("save_dataset: cannot write to " + dir);

  nodesf << "node_id,role,tx_power_dbm\n";
  for (int i = 0; i < na; ++i) {
    nodesf << ds.anchor_names[i] << ",anchor,";
    if (i < static_cast<int>(ds.meas.anchor_tx_power_dbm.size()))
      nodesf << num(ds.meas.anchor_tx_power_dbm[i]);
    nodesf << "\n";
  }
  for (int j = 0; j < nt; ++j) {
    nodesf << ds.target_names[j] << ",target,";
    if (ds.targets_have_power) nodesf << num(ds.scene.tx_power_dbm[j]);
    nodesf << "\n";
  }

  gpsf << "node_id,lat_deg,lon_deg,source\n";
  auto write_fix = [&](const std::string& id, const Eigen::Vector2d& p,
                       const char* source) {
    const GeoFix g = local_to_geo(p - centroid, origin);
    gpsf << id << "," << num(g.lat_deg, "%.15g") << ","
         << num(g.lon_deg, "%.15g") << "," << source << "\n";
  };
  for (int i = 0; i < na; ++i)
    write_fix(ds.anchor_names[i], ds.scene.anchors_true[i], "rtk");
  for (int j = 0; j < nt; ++j)
    write_fix(ds.target_names[j], ds.scene.targets_true[j], "rtk");
  // two standard fixes per anchor encode the mean and delta of the noisy fix
  for (int i = 0; i < na; ++i) {
    const auto& f = ds.meas.anchor_fixes[i];
    const Eigen::Vector2d c{f.delta_m / std::numbers::sqrt2,
                            f.delta_m / std::numbers::sqrt2};
    write_fix(ds.anchor_names[i], f.pos_m + c, "std");
    write_fix(ds.anchor_names[i], f.pos_m - c, "std");
  }

  rssf << "tx_id,rx_id,rssi_dbm,timestamp\n";
  auto name_of = [&](model::NodeId n) {
    return n.kind == model::NodeId::Kind::Anchor ? ds.anchor_names[n.index]
                                                 : ds.target_names[n.index];
  };
  // a symmetric reading pair around the mean reproduces mean and sigma
  for (const auto& m : ds.meas.rss) {
    const double c = m.sigma_db / std::numbers::sqrt2;
    rssf << name_of(m.tx) << "," << name_of(m.rx) << "," << num(m.p_dbm + c)
         << ",\n";
    rssf << name_of(m.tx) << "," << name_of(m.rx) << "," << num(m.p_dbm - c)
         << ",\n";
  }
}

CalibrationFit fit_pathloss(const std::vector<PathlossPoint>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw std::runtime_error("fit_pathloss: need at least 3 points");
  double xm = 0.0, ym = 0.0;
  for (const auto& p : points) {
    if (p.d_m <= 0.0)
      throw std::runtime_error("fit_pathloss: non-positive distance");
    xm += std::log10(p.d_m);
    ym += p.rssi_dbm;
  }
  xm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    const double dx = std::log10(p.d_m) - xm;
    const double dy = p.rssi_dbm - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0)
    throw std::runtime_error("fit_pathloss: needs >= 2 distinct distances");
  const double slope = sxy / sxx;
  CalibrationFit fit;
  fit.ple = -slope / 10.0;
  fit.p0_dbm = ym - slope * xm;
  double ssr = 0.0;
  for (const auto& p : points) {
    const double r = p.rssi_dbm - (fit.p0_dbm + slope * std::log10(p.d_m));
    ssr += r * r;
  }
  fit.residual_std_db = n > 2 ? std::sqrt(ssr / (n - 2)) : 0.0;
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  fit.n_points = n;
  return fit;
}

Histogram histogram_pdf(const std::vector<double>& values,
                        std::optional<int> n_bins) {
  if (values.empty()) throw std::invalid_argument("histogram_pdf: empty input");
  const int n = static_cast<int>(values.size());
  int bins = n_bins.value_or(
      static_cast<int>(std::ceil(1.0 + std::log2(static_cast<double>(n)))));
  bins = std::max(bins, 1);
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  Histogram h;
  for (int b = 0; b <= bins; ++b) h.bin_edges.push_back(lo + b * width);
  h.densities.assign(bins, 0.0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    h.densities[b] += 1.0 / (n * width);
  }
  return h;
}

}  // namespace ctup::dataio
