#include "saferoad/workspace.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "saferoad/error.hpp"
#include "saferoad/image.hpp"
#include "saferoad/util.hpp"

namespace saferoad {

namespace fs = std::filesystem;

namespace {

nlohmann::json provider_json(const imagery::ProviderConfig& p) {
  return {{"endpoint", p.endpoint},
          {"size", p.size},
          {"fixture_mode", p.fixture_mode},
          {"fixture_dir", p.fixture_dir.string()},
          {"max_retries", p.max_retries},
          {"retry_backoff_ms", p.retry_backoff.count()},
          {"timeout_ms", p.timeout.count()},
          {"max_concurrent", p.max_concurrent}};
}

imagery::ProviderConfig provider_from_json(const nlohmann::json& j) {
  imagery::ProviderConfig p;
  p.endpoint = j.value("endpoint", p.endpoint);
  p.size = j.value("size", p.size);
  p.fixture_mode = j.value("fixture_mode", p.fixture_mode);
  p.fixture_dir = j.value("fixture_dir", std::string{});
  p.max_retries = j.value("max_retries", p.max_retries);
  p.retry_backoff = std::chrono::milliseconds(j.value("retry_backoff_ms", 500LL));
  p.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000LL));
  p.max_concurrent = j.value("max_concurrent", p.max_concurrent);
  return p;
}

}  // namespace

nlohmann::json to_json(const WorkspaceConfig& c) {
  return {{"version", kConfigVersion},
          {"cluster", {{"eps_meters", c.cluster.eps_meters}, {"min_samples", c.cluster.min_samples}}},
          {"imagery",
           {{"provider", provider_json(c.provider)},
            {"total_fov", c.total_fov},
            {"per_image_fov", c.per_image_fov},
            {"base_heading", c.base_heading},
            {"non_hotspot_min_distance_meters", c.non_hotspot_min_distance_meters},
            {"seed", c.seed},
            {"test_fraction", c.test_fraction}}},
          {"model", to_json(c.model)},
          {"train", classifier::to_json(c.train)},
          {"cam",
           {{"method", c.cam_method},
            {"threshold", c.cam_threshold},
            {"min_area", c.cam_min_area ? nlohmann::json(*c.cam_min_area) : nlohmann::json(nullptr)}}},
          {"inpaint", {{"backend", c.inpaint_backend}, {"url", c.inpaint_url}}},
          {"saliency", saliency::to_json(c.saliency)}};
}

WorkspaceConfig workspace_config_from_json(const nlohmann::json& j) {
  WorkspaceConfig c;
  if (j.value("version", kConfigVersion) > kConfigVersion) {
    throw Error(ErrorCode::InvalidArgument, "config version is newer than this build supports");
  }
  try {
    if (j.contains("cluster")) {
      c.cluster.eps_meters = j["cluster"].value("eps_meters", c.cluster.eps_meters);
      c.cluster.min_samples = j["cluster"].value("min_samples", c.cluster.min_samples);
    }
    if (j.contains("imagery")) {
      const auto& im = j["imagery"];
      if (im.contains("provider")) c.provider = provider_from_json(im["provider"]);
      c.total_fov = im.value("total_fov", c.total_fov);
      c.per_image_fov = im.value("per_image_fov", c.per_image_fov);
      c.base_heading = im.value("base_heading", c.base_heading);
      c.non_hotspot_min_distance_meters =
          im.value("non_hotspot_min_distance_meters", c.non_hotspot_min_distance_meters);
      c.seed = im.value("seed", c.seed);
      c.test_fraction = im.value("test_fraction", c.test_fraction);
    }
    if (j.contains("model")) c.model = classifier::model_spec_from_json(j["model"]);
    if (j.contains("train")) c.train = classifier::train_config_from_json(j["train"]);
    if (j.contains("cam")) {
      c.cam_method = j["cam"].value("method", c.cam_method);
      c.cam_threshold = j["cam"].value("threshold", c.cam_threshold);
      if (j["cam"].contains("min_area") && !j["cam"]["min_area"].is_null()) {
        c.cam_min_area = j["cam"]["min_area"].get<std::size_t>();
      }
    }
    if (j.contains("inpaint")) {
      c.inpaint_backend = j["inpaint"].value("backend", c.inpaint_backend);
      c.inpaint_url = j["inpaint"].value("url", c.inpaint_url);
    }
    if (j.contains("saliency")) c.saliency = saliency::backend_config_from_json(j["saliency"]);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config: ") + e.what());
  }
  return c;
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  for (const char* d : {"", "imagery", "models", "masks", "cam", "jobs", "reports", "saliency", "idempotency"}) {
    fs::create_directories(root_ / d);
  }
  const auto cfg = root_ / "config.json";
  if (fs::exists(cfg)) {
    const auto bytes = read_file(cfg);
    config_ = workspace_config_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  }
}

void Workspace::set_config(const WorkspaceConfig& c) {
  write_file_atomic(root_ / "config.json", to_json(c).dump(2));
  config_ = c;
}

void Workspace::save_events(const std::vector<events::AccidentEvent>& evs) const {
  std::string out;
  for (const auto& e : evs) out += events::to_json(e).dump() + "\n";
  write_file_atomic(events_path(), out);
}

std::vector<events::AccidentEvent> Workspace::load_events() const {
  if (!fs::exists(events_path())) throw Error(ErrorCode::NotFound, "no ingested events; run ingest first");
  std::vector<events::AccidentEvent> out;
  std::ifstream in(events_path());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(events::event_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void Workspace::save_clusters(const std::vector<hotspot::HotspotCluster>& clusters) const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : clusters) arr.push_back(hotspot::to_json(c));
  write_file_atomic(clusters_path(), arr.dump(2));
  write_file_atomic(root_ / "clusters.geojson", hotspot::to_geojson(clusters).dump(2));
  write_file_atomic(root_ / "clusters.csv", hotspot::to_csv(clusters));
}

std::vector<hotspot::HotspotCluster> Workspace::load_clusters() const {
  if (!fs::exists(clusters_path())) throw Error(ErrorCode::NotFound, "no clusters; run cluster first");
  const auto bytes = read_file(clusters_path());
  std::vector<hotspot::HotspotCluster> out;
  for (const auto& c : nlohmann::json::parse(bytes.begin(), bytes.end())) out.push_back(hotspot::cluster_from_json(c));
  return out;
}

bool Workspace::has_manifest() const {
  auto header = manifest_stem();
  header += ".header.json";
  return fs::exists(header);
}

imagery::DatasetManifest Workspace::load_manifest() const {
  if (!has_manifest()) throw Error(ErrorCode::NotFound, "no image manifest; run fetch first");
  return imagery::load_manifest(manifest_stem());
}

void Workspace::save_manifest(const imagery::DatasetManifest& m) const { imagery::save_manifest(manifest_stem(), m); }

bool Workspace::has_model() const { return fs::exists(model_path()); }

std::shared_ptr<const classifier::ClassifierModel> Workspace::model() const {
  std::lock_guard lock(model_mu_);
  std::error_code ec;
  const auto mtime = fs::last_write_time(model_path(), ec);
  if (ec) throw Error(ErrorCode::NotFound, "no trained model; run train first");
  if (!model_ || mtime != model_mtime_) {
    model_ = classifier::load_checkpoint(model_path());
    model_mtime_ = mtime;
  }
  return model_;
}

void Workspace::save_model(classifier::ClassifierModel& model, const classifier::CheckpointInfo& info) const {
  classifier::save_checkpoint(model_path(), model, info);
}

std::vector<PlannedView> plan_dataset(std::span<const events::AccidentEvent> evs,
                                      std::span<const hotspot::HotspotCluster> clusters,
                                      const WorkspaceConfig& config) {
  if (clusters.empty()) throw Error(ErrorCode::EmptyDataset, "no hotspot clusters");
  BoundingBox box{90.0, 180.0, -90.0, -180.0};
  for (const auto& e : evs) {
    box.min_lat = std::min(box.min_lat, e.latitude);
    box.max_lat = std::max(box.max_lat, e.latitude);
    box.min_lon = std::min(box.min_lon, e.longitude);
    box.max_lon = std::max(box.max_lon, e.longitude);
  }
  if (box.degenerate()) {
    box.min_lat -= 0.01;
    box.max_lat += 0.01;
    box.min_lon -= 0.01;
    box.max_lon += 0.01;
  }
  std::vector<PlannedView> out;
  auto add = [&](LatLon p, imagery::Label label) {
    const auto plan = imagery::plan_captures(p, config.total_fov, config.per_image_fov, config.base_heading);
    for (double h : plan.headings) out.push_back({{p, h, plan.per_image_fov, plan.pitch}, label});
  };
  for (const auto& c : clusters) add(c.center(), imagery::Label::Hotspot);
  const auto negatives = hotspot::sample_non_hotspots(box, clusters, clusters.size(),
                                                      config.non_hotspot_min_distance_meters, config.seed);
  for (const auto& p : negatives) add(p, imagery::Label::NonHotspot);
  return out;
}

imagery::DatasetManifest fetch_dataset(const std::vector<PlannedView>& views, imagery::ImageFetcher& fetcher,
                                       const WorkspaceConfig& config) {
  std::vector<imagery::ImageRecord> records;
  std::map<std::string, imagery::Label> labels;
  for (const auto& v : views) {
    records.push_back(fetcher.fetch(v.key));
    labels[imagery::location_key(v.key.location)] = v.label;
  }
  return imagery::build_manifest(std::move(records), labels, config.seed, config.test_fraction);
}

TrainOutcome train_workspace_model(const Workspace& ws, const classifier::ModelSpec& spec,
                                   const classifier::TrainConfig& train_config) {
  const auto manifest = ws.load_manifest();
  auto model = classifier::build_model(spec);
  TrainOutcome out;
  const auto train_samples = classifier::load_samples(*model, manifest, imagery::Split::Train, ws.root());
  out.log = classifier::train(*model, train_samples, train_config);
  const auto test_samples = classifier::load_samples(*model, manifest, imagery::Split::Test, ws.root());
  nlohmann::json extra = {{"training", classifier::to_json(out.log)}};
  if (!test_samples.empty()) {
    out.test_metrics = classifier::evaluate(*model, test_samples);
    extra["test_metrics"] = classifier::to_json(*out.test_metrics);
    write_file_atomic(ws.path("reports/metrics.json"), classifier::to_json(*out.test_metrics).dump(2));
    write_file_atomic(ws.path("reports/metrics.csv"), classifier::metrics_csv(*out.test_metrics));
  }
  classifier::CheckpointInfo info{spec, train_config, imagery::manifest_hash(manifest), extra};
  ws.save_model(*model, info);
  return out;
}

// ---- stored masks ------------------------------------------------------------

CamArtifacts store_cam_mask(const Workspace& ws, const classifier::ClassifierModel& model,
                            const imagery::ImageRecord& record, const apcam::CamRequest& request, double threshold,
                            std::optional<std::size_t> min_area) {
  const Image image = read_image(ws.root() / record.file_path);
  auto detailed = apcam::compute_cam_detailed(model, image, request);
  CamArtifacts out;
  out.mask = apcam::threshold_to_mask(detailed.heatmap, threshold, min_area);
  out.heatmap = std::move(detailed.heatmap);
  out.layer = detailed.layer;

  const nlohmann::json params = {{"image_id", record.image_id},
                                 {"request", apcam::to_json(request)},
                                 {"layer", out.layer},
                                 {"threshold", threshold},
                                 {"min_area", min_area ? nlohmann::json(*min_area) : nlohmann::json(nullptr)}};
  out.mask_id = "cam-" + sha256_hex(params.dump()).substr(0, 16);
  maskkit::MaskSidecar side;
  side.source = maskkit::MaskSource::Cam;
  side.parent_ids = {record.image_id};
  side.extra = params;
  maskkit::save_mask(ws.path(ws.mask_relpath(out.mask_id)), out.mask, side);
  apcam::save_heatmap(ws.path("cam/" + out.mask_id + ".png"), out.heatmap,
                      {apcam::method_name(request.method), out.layer, threshold, kOverlayColormap});
  return out;
}

std::string store_scribble_mask(const Workspace& ws, const imagery::ImageRecord& record,
                                const maskkit::ScribbleSet& scribbles, maskkit::BinaryMask* out) {
  const Image image = read_image(ws.root() / record.file_path);
  auto mask = maskkit::rasterize_scribbles(scribbles, {image.width(), image.height()});
  const auto strokes = maskkit::to_json(scribbles);
  const std::string mask_id = "scr-" + sha256_hex(record.image_id + "\n" + strokes.dump()).substr(0, 16);
  maskkit::MaskSidecar side;
  side.source = maskkit::MaskSource::Scribble;
  side.parent_ids = {record.image_id};
  side.extra = {{"scribbles", strokes}};
  maskkit::save_mask(ws.path(ws.mask_relpath(mask_id)), mask, side);
  if (out) *out = std::move(mask);
  return mask_id;
}

maskkit::BinaryMask load_stored_mask(const Workspace& ws, const std::string& mask_id) {
  const auto path = ws.path(ws.mask_relpath(mask_id));
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "unknown mask: " + mask_id);
  return maskkit::load_mask(path);
}

nlohmann::json mask_provenance(const Workspace& ws, const std::string& mask_id) {
  const auto side = ws.path(ws.mask_relpath(mask_id) + ".json");
  if (!fs::exists(side)) return nlohmann::json::object();
  const auto bytes = read_file(side);
  const auto sc = maskkit::sidecar_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  return {{"mask_source", maskkit::source_name(sc.source)}, {"params", sc.extra}};
}

}  // namespace saferoad
