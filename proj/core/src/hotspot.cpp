#include "saferoad/hotspot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "saferoad/error.hpp"
#include "saferoad/util.hpp"

namespace saferoad::hotspot {

void ClusterParams::validate() const {
  if (!(eps_meters > 0.0) || !std::isfinite(eps_meters)) {
    throw Error(ErrorCode::InvalidArgument, "eps_meters must be > 0");
  }
  if (min_samples < 1) throw Error(ErrorCode::InvalidArgument, "min_samples must be >= 1");
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Points within haversine distance eps are within chord 2R sin(eps / 2R) on
// the sphere, so a cubic grid with that cell edge bounds every neighborhood
// to the 27 surrounding cells.
class SphereGrid {
 public:
  SphereGrid(std::span<const LatLon> points, double eps_meters) : points_(points) {
    const double half_angle = std::min(eps_meters / (2.0 * kEarthRadiusMeters), std::numbers::pi / 2);
    cell_ = 2.0 * kEarthRadiusMeters * std::sin(half_angle) * (1.0 + 1e-9) + 1e-6;
    xyz_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto p = to_xyz(points[i]);
      xyz_.push_back(p);
      cells_[key(p)].push_back(i);
    }
  }

  template <typename Fn>
  void for_each_candidate(std::size_t i, Fn&& fn) const {
    const CellKey k = key(xyz_[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == cells_.end()) continue;
          for (const auto j : it->second) fn(j);
        }
  }

 private:
  static std::array<double, 3> to_xyz(LatLon p) {
    constexpr double kRad = std::numbers::pi / 180.0;
    const double lat = p.lat * kRad, lon = p.lon * kRad;
    return {kEarthRadiusMeters * std::cos(lat) * std::cos(lon),
            kEarthRadiusMeters * std::cos(lat) * std::sin(lon), kEarthRadiusMeters * std::sin(lat)};
  }
  CellKey key(const std::array<double, 3>& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)),
            static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
  }

  std::span<const LatLon> points_;
  double cell_ = 1.0;
  std::vector<std::array<double, 3>> xyz_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

}  // namespace

std::vector<int> dbscan(std::span<const LatLon> points, const ClusterParams& params) {
  params.validate();
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  const SphereGrid grid(points, params.eps_meters);
  // Neighbor lists in ascending index order keep expansion order identical
  // to a plain all-pairs scan.
  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> out;
    grid.for_each_candidate(i, [&](std::size_t j) {
      if (haversine_meters(points[i], points[j]) <= params.eps_meters) out.push_back(j);
    });
    std::sort(out.begin(), out.end());
    return out;
  };

  const auto min_samples = static_cast<std::size_t>(params.min_samples);
  std::vector<char> visited(n, 0);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = 1;
    auto seeds = neighbors(i);
    if (seeds.size() < min_samples) continue;

    const int cid = next_cluster++;
    labels[i] = cid;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (labels[j] == kNoise) labels[j] = cid;
      if (visited[j]) continue;
      visited[j] = 1;
      const auto nb = neighbors(j);
      if (nb.size() >= min_samples) queue.insert(queue.end(), nb.begin(), nb.end());
    }
  }
  return labels;
}

std::vector<int> dbscan(std::span<const events::AccidentEvent> events, const ClusterParams& params) {
  std::vector<LatLon> pts;
  pts.reserve(events.size());
  for (const auto& e : events) pts.push_back(e.location());
  return dbscan(pts, params);
}

std::vector<HotspotCluster> cluster_centers(std::span<const events::AccidentEvent> events,
                                            std::span<const int> labels) {
  if (events.size() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "labels and events differ in length");
  }
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kNoise) members[labels[i]].push_back(i);
  }
  std::vector<HotspotCluster> out;
  out.reserve(members.size());
  for (const auto& [cid, idx] : members) {
    HotspotCluster c;
    c.cluster_id = cid;
    double sum_lat = 0.0, sum_lon = 0.0;
    for (const auto i : idx) {
      c.member_ids.push_back(events[i].event_id);
      sum_lat += events[i].latitude;
      sum_lon += events[i].longitude;
    }
    c.center_latitude = sum_lat / static_cast<double>(idx.size());
    c.center_longitude = sum_lon / static_cast<double>(idx.size());
    for (const auto i : idx) {
      c.radius_meters = std::max(c.radius_meters, haversine_meters(c.center(), events[i].location()));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LatLon> sample_non_hotspots(const BoundingBox& bbox, std::span<const HotspotCluster> clusters,
                                        std::size_t n, double min_distance_meters, std::uint64_t rng_seed,
                                        const SampleOptions& options) {
  if (bbox.degenerate() || !valid_latlon({bbox.min_lat, bbox.min_lon}) ||
      !valid_latlon({bbox.max_lat, bbox.max_lon})) {
    throw Error(ErrorCode::InvalidArgument, "bounding box is degenerate or out of range");
  }
  if (!(min_distance_meters > 0.0)) throw Error(ErrorCode::InvalidArgument, "min_distance_meters must be > 0");

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> lat_dist(bbox.min_lat, bbox.max_lat);
  std::uniform_real_distribution<double> lon_dist(bbox.min_lon, bbox.max_lon);
  std::vector<LatLon> out;
  out.reserve(n);
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (attempts++ >= options.max_attempts) {
      throw Error(ErrorCode::SamplingExhausted,
                  "rejection sampling exhausted after " + std::to_string(options.max_attempts) +
                      " attempts (" + std::to_string(out.size()) + " of " + std::to_string(n) + " found)");
    }
    const double lat = lat_dist(rng);
    const double lon = lon_dist(rng);
    const LatLon p{lat, lon};
    const bool clear = std::all_of(clusters.begin(), clusters.end(), [&](const HotspotCluster& c) {
      return haversine_meters(p, c.center()) >= min_distance_meters;
    });
    if (clear) out.push_back(p);
  }
  return out;
}

nlohmann::json to_geojson(std::span<const HotspotCluster> clusters) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& c : clusters) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {c.center_longitude, c.center_latitude}}}},
                        {"properties",
                         {{"cluster_id", c.cluster_id},
                          {"member_count", c.member_count()},
                          {"member_ids", c.member_ids},
                          {"radius_meters", c.radius_meters}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

std::string to_csv(std::span<const HotspotCluster> clusters) {
  std::ostringstream out;
  out << "cluster_id,lat,lon,count\n";
  for (const auto& c : clusters) {
    out << c.cluster_id << ',' << format_fixed(c.center_latitude, 9) << ','
        << format_fixed(c.center_longitude, 9) << ',' << c.member_count() << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const HotspotCluster& c) {
  return {{"cluster_id", c.cluster_id},
          {"member_ids", c.member_ids},
          {"center_latitude", c.center_latitude},
          {"center_longitude", c.center_longitude},
          {"radius_meters", c.radius_meters}};
}

HotspotCluster cluster_from_json(const nlohmann::json& j) {
  HotspotCluster c;
  c.cluster_id = j.at("cluster_id").get<int>();
  c.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  c.center_latitude = j.at("center_latitude").get<double>();
  c.center_longitude = j.at("center_longitude").get<double>();
  c.radius_meters = j.value("radius_meters", 0.0);
  return c;
}

}  // namespace saferoad::hotspot
