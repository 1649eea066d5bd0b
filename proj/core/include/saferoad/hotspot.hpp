#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/events.hpp"
#include "saferoad/geo.hpp"

namespace saferoad::hotspot {

inline constexpr int kNoise = -1;

struct ClusterParams {
  double eps_meters = 100.0;
  int min_samples = 5;

  void validate() const;
};

struct HotspotCluster {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  double center_latitude = 0.0;
  double center_longitude = 0.0;
  // Largest haversine distance from the center to any member. Derived
  // metadata describing the hotspot area, not used by the pipeline.
  double radius_meters = 0.0;

  std::size_t member_count() const noexcept { return member_ids.size(); }
  LatLon center() const noexcept { return {center_latitude, center_longitude}; }
};

// DBSCAN under haversine distance. Neighborhoods are inclusive of the point
// itself and of points at exactly eps. Clusters are numbered in order of
// discovery; a border point reachable from several clusters joins the first
// one that reaches it. Neighbor queries go through a grid over unit-sphere
// coordinates; membership is decided by haversine distance alone.
std::vector<int> dbscan(std::span<const LatLon> points, const ClusterParams& params);
std::vector<int> dbscan(std::span<const events::AccidentEvent> events, const ClusterParams& params);

// One cluster per non-noise label, ordered by cluster id. Centers are the
// unweighted mean of member coordinates.
std::vector<HotspotCluster> cluster_centers(std::span<const events::AccidentEvent> events,
                                            std::span<const int> labels);

struct SampleOptions {
  std::size_t max_attempts = 100'000;
};

// Draws n points uniformly (in degrees) inside bbox, rejecting any within
// min_distance_meters of a hotspot center. Throws SamplingExhausted when the
// attempt budget runs out.
std::vector<LatLon> sample_non_hotspots(const BoundingBox& bbox, std::span<const HotspotCluster> clusters,
                                        std::size_t n, double min_distance_meters, std::uint64_t rng_seed,
                                        const SampleOptions& options = {});

nlohmann::json to_geojson(std::span<const HotspotCluster> clusters);
std::string to_csv(std::span<const HotspotCluster> clusters);
nlohmann::json to_json(const HotspotCluster& c);
HotspotCluster cluster_from_json(const nlohmann::json& j);

}  // namespace saferoad::hotspot
