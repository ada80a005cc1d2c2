#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "ctup/model.hpp"

namespace ctup::dataio {

/// One row of rss.csv: a directed RSS reading between named nodes.
struct RssLogRecord {
  std::string tx_id;
  std::string rx_id;
  double rssi_dbm{0.0};
  std::optional<double> timestamp_s;
};

/// One row of gps.csv: a geodetic fix from either the standard GPS receiver
/// or the RTK ground-truth receiver.
struct GeoFix {
  std::string node_id;
  double lat_deg{0.0};
  double lon_deg{0.0};
  enum class Source { StdGps, RtkGps } source{Source::StdGps};
};

/// Log-normal model fitted to distance/RSS pairs.
struct CalibrationFit {
  double p0_dbm{0.0};       // received power at d0 = 1 m
  double ple{0.0};          // fitted beta
  double residual_std_db{0.0};
  int n_points{0};
  double r_squared{0.0};
};

/// A field dataset mapped onto the in-memory model: RTK fixes become the
/// ground-truth scene, standard-GPS fixes become noisy anchor fixes, repeated
/// RSS readings are aggregated per directed link.
struct Dataset {
  model::NetworkScene scene;
  model::MeasurementSet meas;
  std::vector<std::string> anchor_names;  // index order of the scene
  std::vector<std::string> target_names;
  bool targets_have_power{false};
  std::vector<std::string> warnings;
};

struct LoadOptions {
  /// Aggregate repeated readings by median instead of mean.
  bool median{false};
};

/// Reads rss.csv, gps.csv, and nodes.csv from `dir`. Local coordinates are
/// meters relative to the centroid of the RTK fixes. Malformed rows throw
/// std::runtime_error with file and line diagnostics.
Dataset load_dataset(const std::string& dir, const LoadOptions& opts = {});

/// Inverse of load_dataset: writes the three CSVs so that loading them again
/// reproduces the dataset (links are written as symmetric reading pairs that
/// encode both the mean and the per-link std).
void save_dataset(const Dataset& ds, const std::string& dir);

/// Small-area equirectangular projection around `origin`:
/// east = R dlon cos(lat0), north = R dlat, R = 6371000 m. Appends a warning
/// when the extent exceeds the ~10 km small-area assumption.
std::vector<Eigen::Vector2d> geo_to_local(const std::vector<GeoFix>& fixes,
                                          const GeoFix& origin,
                                          std::vector<std::string>* warnings =
                                              nullptr);

/// Inverse projection of geo_to_local.
GeoFix local_to_geo(const Eigen::Vector2d& pos_m, const GeoFix& origin);

struct PathlossPoint {
  double d_m{1.0};
  double rssi_dbm{0.0};
};

/// Ordinary least squares of rssi on log10(distance): slope = -10 beta,
/// intercept = P0. Needs >= 3 points over >= 2 distinct distances.
CalibrationFit fit_pathloss(const std::vector<PathlossPoint>& points);

struct Histogram {
  std::vector<double> bin_edges;  // n_bins + 1
  std::vector<double> densities;  // sum(density * width) == 1
};

/// Density histogram; the default bin count follows Sturges' rule,
/// ceil(1 + log2(n)).
Histogram histogram_pdf(const std::vector<double>& values,
                        std::optional<int> n_bins = std::nullopt);

}  // namespace ctup::dataio
