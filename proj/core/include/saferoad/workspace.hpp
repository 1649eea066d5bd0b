#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/apcam.hpp"
#include "saferoad/classifier.hpp"
#include "saferoad/events.hpp"
#include "saferoad/hotspot.hpp"
#include "saferoad/imagery.hpp"
#include "saferoad/maskkit.hpp"
#include "saferoad/saliency.hpp"

namespace saferoad {

inline constexpr int kConfigVersion = 1;

// Module defaults, persisted as `<root>/config.json`.
struct WorkspaceConfig {
  hotspot::ClusterParams cluster;
  imagery::ProviderConfig provider;
  double total_fov = 240.0;
  double per_image_fov = 80.0;
  double base_heading = 0.0;
  double non_hotspot_min_distance_meters = 500.0;
  std::uint64_t seed = 0;
  double test_fraction = 0.3;
  classifier::ModelSpec model;
  classifier::TrainConfig train;
  std::string cam_method = "gradcam";
  double cam_threshold = apcam::kDefaultThreshold;
  std::optional<std::size_t> cam_min_area;
  std::string inpaint_backend = "mock";  // mock | http
  std::string inpaint_url;               // empty: INPAINT_BACKEND_URL
  saliency::BackendConfig saliency;
};

nlohmann::json to_json(const WorkspaceConfig& c);
// Missing keys keep their defaults. Throws InvalidArgument on a newer
// config version.
WorkspaceConfig workspace_config_from_json(const nlohmann::json& j);

// Filesystem layout of one project. All stored paths are relative to root.
class Workspace {
 public:
  // Creates the directory tree; loads config.json when present.
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  const WorkspaceConfig& config() const noexcept { return config_; }
  void set_config(const WorkspaceConfig& c);

  std::filesystem::path events_path() const { return root_ / "events.jsonl"; }
  std::filesystem::path clusters_path() const { return root_ / "clusters.json"; }
  std::filesystem::path manifest_stem() const { return root_ / "manifest"; }
  std::filesystem::path model_path() const { return root_ / "models" / "model.ckpt"; }
  std::filesystem::path sessions_path() const { return root_ / "sessions.jsonl"; }

  void save_events(const std::vector<events::AccidentEvent>& events) const;
  // Throws NotFound.
  std::vector<events::AccidentEvent> load_events() const;

  void save_clusters(const std::vector<hotspot::HotspotCluster>& clusters) const;
  std::vector<hotspot::HotspotCluster> load_clusters() const;

  bool has_manifest() const;
  imagery::DatasetManifest load_manifest() const;
  void save_manifest(const imagery::DatasetManifest& m) const;

  bool has_model() const;
  // Cached until the checkpoint file changes. Throws NotFound.
  std::shared_ptr<const classifier::ClassifierModel> model() const;
  void save_model(classifier::ClassifierModel& model, const classifier::CheckpointInfo& info) const;

  // Relative paths for stored masks: masks/<id>.png.
  std::string mask_relpath(const std::string& mask_id) const { return "masks/" + mask_id + ".png"; }

 private:
  std::filesystem::path root_;
  WorkspaceConfig config_;
  mutable std::mutex model_mu_;
  mutable std::shared_ptr<const classifier::ClassifierModel> model_;
  mutable std::filesystem::file_time_type model_mtime_{};
};

// ---- stored masks --------------------------------------------------------------

struct CamArtifacts {
  apcam::Heatmap heatmap;
  std::string layer;
  maskkit::BinaryMask mask;
  std::string mask_id;  // "cam-" + content-derived suffix
};

// Computes the CAM of a manifest image, thresholds it and stores the mask
// (masks/<id>.png) and heatmap (cam/<id>.png). Same parameters, same id.
CamArtifacts store_cam_mask(const Workspace& ws, const classifier::ClassifierModel& model,
                            const imagery::ImageRecord& record, const apcam::CamRequest& request, double threshold,
                            std::optional<std::size_t> min_area);

// Rasterizes scribbles over a manifest image and stores the mask; returns
// its id ("scr-" + content-derived suffix).
std::string store_scribble_mask(const Workspace& ws, const imagery::ImageRecord& record,
                                const maskkit::ScribbleSet& scribbles, maskkit::BinaryMask* out = nullptr);

// Throws NotFound.
maskkit::BinaryMask load_stored_mask(const Workspace& ws, const std::string& mask_id);

// Provenance recorded with a session: {"mask_source", "params"}.
nlohmann::json mask_provenance(const Workspace& ws, const std::string& mask_id);

// ---- dataset assembly --------------------------------------------------------

struct PlannedView {
  imagery::CaptureKey key;
  imagery::Label label = imagery::Label::Unlabeled;
};

// Views around every hotspot center plus as many non-hotspot locations,
// sampled inside the events' bounding box away from every hotspot.
std::vector<PlannedView> plan_dataset(std::span<const events::AccidentEvent> events,
                                      std::span<const hotspot::HotspotCluster> clusters, const WorkspaceConfig& config);

// Fetches every view and builds the labeled, split manifest.
imagery::DatasetManifest fetch_dataset(const std::vector<PlannedView>& views, imagery::ImageFetcher& fetcher,
                                       const WorkspaceConfig& config);

// ---- training ------------------------------------------------------------------

struct TrainOutcome {
  classifier::TrainingLog log;
  std::optional<classifier::EvalMetrics> test_metrics;  // absent for an empty test split
};

// Trains on the manifest's train split, evaluates on its test split and
// saves the checkpoint plus reports/metrics.{json,csv}.
TrainOutcome train_workspace_model(const Workspace& ws, const classifier::ModelSpec& spec,
                                   const classifier::TrainConfig& train_config);

}  // namespace saferoad
