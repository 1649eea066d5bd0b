// saferoad: command line front end over one workspace directory.
//
// Results go to stdout as one JSON document. Failures print a single line
// {"error":{"code":..., "message":...}} to stderr and exit nonzero.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "saferoad/apcam.hpp"
#include "saferoad/error.hpp"
#include "saferoad/evalreport.hpp"
#include "saferoad/events.hpp"
#include "saferoad/gateway.hpp"
#include "saferoad/hotspot.hpp"
#include "saferoad/image.hpp"
#include "saferoad/inpaint.hpp"
#include "saferoad/saliency.hpp"
#include "saferoad/synth.hpp"
#include "saferoad/util.hpp"
#include "saferoad/workspace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace saferoad;

namespace {

constexpr int kExitError = 2;
constexpr int kExitUsage = 64;

void print_error(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

json read_json_file(const fs::path& path) {
  const auto bytes = read_file(path);
  return json::parse(bytes.begin(), bytes.end());
}

imagery::ImageRecord require_record(const Workspace& ws, const std::string& image_id) {
  const auto manifest = ws.load_manifest();
  const auto* r = manifest.find(image_id);
  if (!r) throw Error(ErrorCode::NotFound, "unknown image: " + image_id);
  return *r;
}

std::string random_suffix() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- option bundles ------------------------------------------------------------

struct CamOpts {
  std::string image;
  std::optional<std::string> method;
  std::optional<double> threshold;
  std::string layer;
  std::string target = "hotspot";
  std::optional<std::size_t> min_area;
};

apcam::CamRequest cam_request(const WorkspaceConfig& cfg, const CamOpts& o) {
  return apcam::cam_request_from_json(
      {{"method", o.method.value_or(cfg.cam_method)}, {"layer", o.layer}, {"target_class", o.target}});
}

// ---- subcommands -------------------------------------------------------------

void cmd_ingest(Workspace& ws, const std::string& csv, const std::string& schema_path) {
  auto schema = events::EventSchema::nyc();
  if (!schema_path.empty()) schema = events::schema_from_json(read_json_file(schema_path));
  const auto bytes = read_file(csv);
  const auto parsed = events::parse_events(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                           schema);
  ws.save_events(parsed.events);
  emit({{"events", parsed.events.size()}, {"skipped", parsed.skipped_count}, {"rows", parsed.row_count}});
}

void cmd_cluster(Workspace& ws, std::optional<double> eps, std::optional<int> min_samples) {
  auto cfg = ws.config();
  if (eps) cfg.cluster.eps_meters = *eps;
  if (min_samples) cfg.cluster.min_samples = *min_samples;
  cfg.cluster.validate();
  const auto evs = ws.load_events();
  const auto labels = hotspot::dbscan(evs, cfg.cluster);
  const auto clusters = hotspot::cluster_centers(evs, labels);
  ws.save_clusters(clusters);
  ws.set_config(cfg);
  const auto noise = std::count(labels.begin(), labels.end(), hotspot::kNoise);
  emit({{"clusters", clusters.size()},
        {"noise", noise},
        {"features", hotspot::to_geojson(clusters).at("features").size()},
        {"geojson", (ws.root() / "clusters.geojson").string()}});
}

struct FetchOpts {
  std::optional<double> fov, per_image_fov, base_heading, min_distance, test_fraction;
  std::optional<std::uint64_t> seed;
  std::string fixture_dir;
};

void cmd_fetch(Workspace& ws, const FetchOpts& o) {
  auto cfg = ws.config();
  if (o.fov) cfg.total_fov = *o.fov;
  if (o.per_image_fov) cfg.per_image_fov = *o.per_image_fov;
  if (o.base_heading) cfg.base_heading = *o.base_heading;
  if (o.min_distance) cfg.non_hotspot_min_distance_meters = *o.min_distance;
  if (o.test_fraction) cfg.test_fraction = *o.test_fraction;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.fixture_dir.empty()) {
    cfg.provider.fixture_mode = true;
    cfg.provider.fixture_dir = fs::absolute(o.fixture_dir);
  }
  const auto evs = ws.load_events();
  const auto clusters = ws.load_clusters();
  const auto views = plan_dataset(evs, clusters, cfg);
  imagery::ImageFetcher fetcher(ws.root(), cfg.provider);
  const auto manifest = fetch_dataset(views, fetcher, cfg);
  ws.save_manifest(manifest);
  ws.set_config(cfg);
  std::size_t hot = 0;
  for (const auto& r : manifest.records) hot += r.label() == imagery::Label::Hotspot;
  emit({{"images", manifest.records.size()},
        {"hotspot", hot},
        {"non_hotspot", manifest.records.size() - hot},
        {"train", manifest.split(imagery::Split::Train).size()},
        {"test", manifest.split(imagery::Split::Test).size()},
        {"provider_requests", fetcher.request_count()}});
}

struct TrainOpts {
  std::optional<std::string> backbone;
  std::optional<bool> abm;
  std::optional<int> epochs, batch_size, input_size;
  std::optional<double> lr, width;
  std::optional<std::uint64_t> seed;
};

void cmd_train(Workspace& ws, const TrainOpts& o) {
  auto cfg = ws.config();
  if (o.backbone) cfg.model.backbone = classifier::backbone_from_name(*o.backbone);
  if (o.abm) cfg.model.abm_enabled = *o.abm;
  if (o.input_size) cfg.model.input_size = *o.input_size;
  if (o.width) cfg.model.width_multiplier = *o.width;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.seed) {
    cfg.train.seed = *o.seed;
    cfg.model.init_seed = *o.seed;
  }
  cfg.model.validate();
  cfg.train.validate();
  const auto outcome = train_workspace_model(ws, cfg.model, cfg.train);
  ws.set_config(cfg);
  json out = {{"checkpoint", ws.model_path().string()}, {"training", classifier::to_json(outcome.log)}};
  if (outcome.test_metrics) out["test_metrics"] = classifier::to_json(*outcome.test_metrics);
  emit(out);
}

void cmd_cam(Workspace& ws, const CamOpts& o, const std::string& overlay_path) {
  const auto& cfg = ws.config();
  const auto record = require_record(ws, o.image);
  const auto model = ws.model();
  const auto request = cam_request(cfg, o);
  const double threshold = o.threshold.value_or(cfg.cam_threshold);
  const auto art = store_cam_mask(ws, *model, record, request, threshold, o.min_area ? o.min_area : cfg.cam_min_area);
  if (!overlay_path.empty()) {
    write_png(overlay_path, apcam::overlay(read_image(ws.root() / record.file_path), art.heatmap));
  }
  emit({{"image_id", record.image_id},
        {"method", apcam::method_name(request.method)},
        {"layer", art.layer},
        {"threshold", threshold},
        {"mask_id", art.mask_id},
        {"mask_area", art.mask.area()},
        {"mask_path", ws.mask_relpath(art.mask_id)},
        {"heatmap_path", "cam/" + art.mask_id + ".png"}});
}

void cmd_mask(Workspace& ws, const std::string& image_id, const std::string& scribbles) {
  const auto record = require_record(ws, image_id);
  maskkit::BinaryMask mask;
  const auto id = store_scribble_mask(ws, record, maskkit::scribbles_from_json(read_json_file(scribbles)), &mask);
  emit({{"mask_id", id}, {"area", mask.area()}, {"mask_path", ws.mask_relpath(id)}});
}

struct InpaintOpts {
  std::string image, mask, design, prompt, sampler = "Euler a";
  std::int64_t seed = 0;
  double cfg_scale = 12.0, denoise = 0.70;
  int n = 1;
};

void cmd_inpaint(Workspace& ws, const InpaintOpts& o) {
  json rj = {{"image_id", o.image},
             {"cfg_scale", o.cfg_scale},
             {"denoise_strength", o.denoise},
             {"seed", o.seed},
             {"sampler_name", o.sampler},
             {"n_candidates", o.n}};
  if (!o.design.empty()) rj["design_name"] = o.design;
  if (!o.prompt.empty()) rj["prompt"] = o.prompt;
  auto request = inpaint::request_from_json(rj);
  request.validate();
  const auto record = require_record(ws, o.image);
  request.mask = load_stored_mask(ws, o.mask);
  const Image image = read_image(ws.root() / record.file_path);
  const auto& cfg = ws.config();
  auto backend = inpaint::make_backend(cfg.inpaint_backend, cfg.inpaint_url);
  const auto result = inpaint::inpaint(image, request, *backend);

  evalreport::RedesignSession session;
  session.session_id = "sess-" + random_suffix();
  session.image_id = record.image_id;
  session.mask_id = o.mask;
  session.inpaint_request = inpaint::to_json(request);
  session.original_path = record.file_path;
  session.cam = mask_provenance(ws, o.mask);

  json candidates = json::array();
  const std::string dir = "candidates/" + session.session_id;
  fs::create_directories(ws.path(dir));
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    const std::string id = "c" + std::to_string(k);
    const std::string rel = dir + "/" + id + ".png";
    write_png(ws.path(rel), result.candidates[k].image);
    candidates.push_back({{"candidate_id", id}, {"seed", result.candidates[k].seed}, {"path", rel}});
  }
  evalreport::SessionStore(ws.sessions_path()).append(session);
  emit({{"session_id", session.session_id},
        {"backend", result.backend},
        {"candidates", candidates},
        {"warnings", result.warnings}});
}

void cmd_select(Workspace& ws, const std::string& session_id, const std::string& candidate, const std::string& notes,
                std::optional<double> seconds) {
  evalreport::SessionStore store(ws.sessions_path());
  auto session = store.find(session_id);
  if (!session) throw Error(ErrorCode::NotFound, "unknown session: " + session_id);
  session->candidate_id = candidate;
  if (candidate == evalreport::kOriginalCandidate) {
    session->candidate_path = session->original_path;
  } else if (!session->job_id.empty()) {
    session->candidate_path = "jobs/" + session->job_id + "/" + candidate + ".png";
  } else {
    session->candidate_path = "candidates/" + session_id + "/" + candidate + ".png";
  }
  if (!notes.empty()) session->notes = notes;
  if (seconds) session->operator_seconds = *seconds;
  evalreport::score_session(*ws.model(), *session, ws.root());
  session->revision = store.append(*session);
  json out = evalreport::to_json(*session);
  out["percentage_change"] = *session->p_before > 0.0
                                 ? json(100.0 * (*session->p_before - *session->p_after) / *session->p_before)
                                 : json(nullptr);
  emit(out);
}

json model_identity(const Workspace& ws) {
  if (!ws.has_model()) return json::object();
  classifier::CheckpointInfo info;
  classifier::load_checkpoint(ws.model_path(), &info);
  std::string name = classifier::backbone_name(info.spec.backbone);
  if (info.spec.abm_enabled) name += "-abm";
  return {{"name", name}, {"spec", classifier::to_json(info.spec)}, {"manifest_hash", info.manifest_hash}};
}

void cmd_report(Workspace& ws) {
  const auto sessions = evalreport::SessionStore(ws.sessions_path()).latest();
  const auto report = evalreport::aggregate(sessions, model_identity(ws));
  const json j = evalreport::to_json(report);
  write_file_atomic(ws.path("reports/latest.json"), j.dump(2));
  write_file_atomic(ws.path("reports/latest.csv"), evalreport::report_csv(report));
  emit(j);
}

void cmd_saliency(Workspace& ws, const std::vector<std::string>& ids, const CamOpts& cam) {
  const auto& cfg = ws.config();
  const auto manifest = ws.load_manifest();
  std::vector<std::pair<std::string, Image>> images;
  if (ids.empty()) {
    for (const auto* r : manifest.split(imagery::Split::Test)) {
      if (r->label() == imagery::Label::Hotspot) images.emplace_back(r->image_id, read_image(ws.root() / r->file_path));
    }
  } else {
    for (const auto& id : ids) {
      const auto* r = manifest.find(id);
      if (!r) throw Error(ErrorCode::NotFound, "unknown image: " + id);
      images.emplace_back(r->image_id, read_image(ws.root() / r->file_path));
    }
  }
  saliency::CamMaskConfig cm;
  cm.request = cam_request(cfg, cam);
  cm.threshold = cam.threshold.value_or(cfg.cam_threshold);
  cm.min_area = cam.min_area ? cam.min_area : cfg.cam_min_area;
  const auto report = saliency::batch_saliency_report(*ws.model(), images, cm, cfg.saliency);
  const json j = saliency::to_json(report);
  write_file_atomic(ws.path("reports/saliency.json"), j.dump(2));
  write_file_atomic(ws.path("reports/saliency.csv"), saliency::report_csv(report));
  emit(j);
}

void cmd_chroma(Workspace& ws, const std::string& image_id, const std::string& mask_id, const json& params_json) {
  const auto record = require_record(ws, image_id);
  const auto params = saliency::chroma_params_from_json(params_json);
  const auto mask = load_stored_mask(ws, mask_id);
  const Image out = saliency::chrominance_alter(read_image(ws.root() / record.file_path), mask, params);
  const json body = {{"image_id", image_id}, {"mask_id", mask_id}, {"params", saliency::to_json(params)}};
  const std::string id = "chroma-" + sha256_hex(image_id + body.dump()).substr(0, 16);
  write_png(ws.path("saliency/" + id + ".png"), out);
  write_file_atomic(ws.path("saliency/" + id + ".png.json"), body.dump(2));
  emit({{"altered_id", id}, {"path", "saliency/" + id + ".png"}});
}

void cmd_recipe(const std::string& method, const std::vector<std::string>& designs, const std::string& out_dir) {
  std::vector<inpaint::DesignInstances> list;
  for (const auto& d : designs) {
    const auto eq = d.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::InvalidArgument, "expected name=dir, got " + d);
    inpaint::find_prompt(d.substr(0, eq));
    list.push_back({d.substr(0, eq), d.substr(eq + 1)});
  }
  std::optional<fs::path> out;
  if (!out_dir.empty()) out = out_dir;
  emit(inpaint::to_json(inpaint::emit_finetune_recipe(list, inpaint::finetune_method_from_name(method), out)));
}

void cmd_serve(const fs::path& root, const std::string& host, int port, const std::string& static_dir) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by server threads

  gateway::Gateway gw({root, host, port, static_dir});
  const int bound = gw.start();
  std::cout << json{{"listening", host + ":" + std::to_string(bound)}, {"port", bound}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  gw.stop();
}

void cmd_demo_data(Workspace& ws, const fs::path& out, std::size_t hotspots, std::uint64_t seed, int size) {
  const auto demo = synth::write_demo_corpus(out, hotspots, seed, ws.config(), size);
  emit({{"events_csv", demo.events_csv.string()},
        {"fixture_dir", demo.fixture_dir.string()},
        {"hotspots", demo.hotspots},
        {"views", demo.views}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accident-hotspot imagery, attention maps and redesign evaluation"};
  app.require_subcommand(1);
  std::string workspace = ".";
  app.add_option("-w,--workspace", workspace, "Workspace directory")->capture_default_str();

  std::string csv, schema;
  auto* ingest = app.add_subcommand("ingest", "Parse an accident CSV into the workspace");
  ingest->add_option("csv", csv, "Input CSV")->required();
  ingest->add_option("--schema", schema, "JSON column mapping");

  std::optional<double> eps;
  std::optional<int> min_samples;
  auto* cluster = app.add_subcommand("cluster", "Run DBSCAN over the ingested events");
  cluster->add_option("--eps", eps, "Neighborhood radius in meters");
  cluster->add_option("--min-samples", min_samples, "Core point threshold");

  FetchOpts fo;
  auto* fetch = app.add_subcommand("fetch", "Download views and build the labeled manifest");
  fetch->add_option("--fov", fo.fov, "Total field of view per location");
  fetch->add_option("--per-image-fov", fo.per_image_fov, "Field of view per image");
  fetch->add_option("--base-heading", fo.base_heading);
  fetch->add_option("--min-distance", fo.min_distance, "Meters between non-hotspots and hotspots");
  fetch->add_option("--test-fraction", fo.test_fraction);
  fetch->add_option("--seed", fo.seed);
  fetch->add_option("--fixture-dir", fo.fixture_dir, "Serve views from local files instead of the provider");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Train the hotspot classifier");
  train->add_option("--backbone", to.backbone, "squeezenet | resnet18 | vgg | densenet | tinycnn");
  train->add_option("--abm", to.abm, "Enable the attention block (true/false)")->expected(0, 1)->default_str("true");
  train->add_option("--epochs", to.epochs);
  train->add_option("--batch-size", to.batch_size);
  train->add_option("--lr", to.lr);
  train->add_option("--input-size", to.input_size);
  train->add_option("--width", to.width, "Channel width multiplier");
  train->add_option("--seed", to.seed);

  CamOpts co;
  std::string overlay;
  auto add_cam_flags = [&co](CLI::App* sub) {
    sub->add_option("--method", co.method, "gradcam | gradcampp | scorecam");
    sub->add_option("--threshold", co.threshold);
    sub->add_option("--layer", co.layer);
    sub->add_option("--target", co.target, "hotspot | non_hotspot");
    sub->add_option("--min-area", co.min_area);
  };
  auto* cam = app.add_subcommand("cam", "Compute a CAM heatmap and AP mask for one image");
  cam->add_option("--image", co.image)->required();
  cam->add_option("--overlay", overlay, "Also write a colorized overlay PNG here");
  add_cam_flags(cam);

  std::string mask_image, scribbles;
  auto* mask = app.add_subcommand("mask", "Rasterize a scribble set into a stored mask");
  mask->add_option("--image", mask_image)->required();
  mask->add_option("--scribbles", scribbles, "Scribble JSON file")->required();

  InpaintOpts io;
  auto* inp = app.add_subcommand("inpaint", "Generate redesign candidates for a masked image");
  inp->add_option("--image", io.image)->required();
  inp->add_option("--mask", io.mask, "Stored mask id")->required();
  auto* design_opt = inp->add_option("--design", io.design, "Prompt catalog entry");
  inp->add_option("--prompt", io.prompt)->excludes(design_opt);
  inp->add_option("--seed", io.seed);
  inp->add_option("--cfg", io.cfg_scale);
  inp->add_option("--denoise", io.denoise);
  inp->add_option("--n", io.n);
  inp->add_option("--sampler", io.sampler);

  std::string sel_session, sel_candidate, sel_notes;
  std::optional<double> sel_seconds;
  auto* select = app.add_subcommand("select", "Choose a candidate for a session and score it");
  select->add_option("--session", sel_session)->required();
  select->add_option("--candidate", sel_candidate, "Candidate id or 'original'")->required();
  select->add_option("--notes", sel_notes);
  select->add_option("--seconds", sel_seconds, "Operator time spent");

  std::vector<std::string> sal_ids;
  auto* sal = app.add_subcommand("saliency", "AP saliency ratios (default: hotspot test images)");
  sal->add_option("--image", sal_ids);
  add_cam_flags(sal);

  std::string chroma_image, chroma_mask, chroma_mode = "auto_contrast";
  double chroma_strength = 1.0, chroma_hue = 0.0;
  auto* chroma = app.add_subcommand("chroma", "Shift the chrominance of a masked region");
  chroma->add_option("--image", chroma_image)->required();
  chroma->add_option("--mask", chroma_mask)->required();
  chroma->add_option("--strength", chroma_strength);
  chroma->add_option("--mode", chroma_mode, "auto_contrast | fixed");
  chroma->add_option("--hue", chroma_hue, "Target hue in degrees for fixed mode");

  auto* report = app.add_subcommand("report", "Aggregate scored sessions");

  std::string recipe_method = "dreambooth", recipe_out;
  std::vector<std::string> recipe_designs;
  auto* recipe = app.add_subcommand("recipe", "Emit a fine-tuning recipe");
  recipe->add_option("--method", recipe_method, "dreambooth | textual_inversion");
  recipe->add_option("--design", recipe_designs, "name=instance_dir")->required();
  recipe->add_option("--out", recipe_out);

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--host", host);
  serve->add_option("--static-dir", static_dir, "Console assets");

  std::string demo_out;
  std::size_t demo_hotspots = 20;
  std::uint64_t demo_seed = 1;
  int demo_size = 128;
  auto* demo = app.add_subcommand("demo-data", "Write a synthetic event CSV and matching fixture views");
  demo->add_option("--out", demo_out)->required();
  demo->add_option("--hotspots", demo_hotspots);
  demo->add_option("--seed", demo_seed);
  demo->add_option("--size", demo_size, "Image edge in pixels");

  auto* config = app.add_subcommand("config", "Show or replace the workspace configuration");
  std::string config_import;
  config->add_option("--import", config_import, "JSON config to store");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("INVALID_ARGUMENT", e.what());
    return kExitUsage;
  }

  try {
    if (*recipe) {
      cmd_recipe(recipe_method, recipe_designs, recipe_out);
      return 0;
    }
    if (*serve) {
      cmd_serve(workspace, host, port, static_dir);
      return 0;
    }
    Workspace ws(workspace);
    if (*ingest) cmd_ingest(ws, csv, schema);
    else if (*cluster) cmd_cluster(ws, eps, min_samples);
    else if (*fetch) cmd_fetch(ws, fo);
    else if (*train) cmd_train(ws, to);
    else if (*cam) cmd_cam(ws, co, overlay);
    else if (*mask) cmd_mask(ws, mask_image, scribbles);
    else if (*inp) cmd_inpaint(ws, io);
    else if (*select) cmd_select(ws, sel_session, sel_candidate, sel_notes, sel_seconds);
    else if (*sal) cmd_saliency(ws, sal_ids, co);
    else if (*chroma) {
      json params = {{"strength", chroma_strength}, {"target_hue_mode", chroma_mode}, {"fixed_hue", chroma_hue}};
      cmd_chroma(ws, chroma_image, chroma_mask, params);
    } else if (*report) cmd_report(ws);
    else if (*demo) cmd_demo_data(ws, demo_out, demo_hotspots, demo_seed, demo_size);
    else if (*config) {
      if (!config_import.empty()) ws.set_config(workspace_config_from_json(read_json_file(config_import)));
      emit(to_json(ws.config()));
    }
    return 0;
  } catch (const Error& e) {
    print_error(code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    print_error("INVALID_ARGUMENT", e.what());
  } catch (const std::exception& e) {
    print_error("INTERNAL", e.what());
  }
  return kExitError;
}
