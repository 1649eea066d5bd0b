#include "saferoad/gateway.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "saferoad/apcam.hpp"
#include "saferoad/evalreport.hpp"
#include "saferoad/inpaint.hpp"
#include "saferoad/jobs.hpp"
#include "saferoad/maskkit.hpp"
#include "saferoad/saliency.hpp"
#include "saferoad/util.hpp"
#include "saferoad/workspace.hpp"

namespace saferoad::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedCsv:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::UnknownBackbone:
    case ErrorCode::LayerNotFound:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::GeometryMismatch:
    case ErrorCode::InvalidMask:
    case ErrorCode::EmptyInstanceSet:
    case ErrorCode::UndecodableImage:
    case ErrorCode::SingleClassDataset:
    case ErrorCode::EmptyDataset:
      return 400;
    case ErrorCode::NotFound:
    case ErrorCode::MissingCandidate:
    case ErrorCode::NoScoredSessions:
    case ErrorCode::FixtureMissing:
    case ErrorCode::NoImageryAtLocation:
      return 404;
    case ErrorCode::IllegalTransition:
      return 409;
    case ErrorCode::EmptyApMask:
      return 422;
    case ErrorCode::ProviderQuotaExceeded:
      return 429;
    case ErrorCode::AdapterUnavailable:
    case ErrorCode::BackendUnavailable:
    case ErrorCode::BackendTimeout:
    case ErrorCode::NetworkFailure:
      return 503;
    default:
      return 500;
  }
}

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), {{"error", {{"code", std::string(code_name(code))}, {"message", message}}}});
}

std::string as_string(const Bytes& b) { return {b.begin(), b.end()}; }

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("body is not valid JSON: ") + e.what());
  }
}

double query_double(const httplib::Request& req, const char* key, double fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    return std::stod(req.get_param_value(key));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter ") + key + " must be a number");
  }
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    const long long v = std::stoll(req.get_param_value(key));
    if (v < 0) throw std::out_of_range("negative");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter ") + key + " must be a non-negative integer");
  }
}

// Ids become file names; keep them to a safe alphabet.
const std::string& checked_id(const std::string& id) {
  if (id.empty() || id.size() > 128 ||
      id.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.") != std::string::npos ||
      id.find("..") != std::string::npos) {
    throw Error(ErrorCode::NotFound, "unknown id: " + id);
  }
  return id;
}

}  // namespace

struct Gateway::Impl {
  explicit Impl(GatewayOptions o) : options(std::move(o)), ws(options.workspace), store(ws.sessions_path()) {
    std::map<jobs::JobKind, jobs::Handler> handlers;
    handlers[jobs::JobKind::Inpaint] = [this](const jobs::Job& j) { return run_inpaint(j); };
    handlers[jobs::JobKind::Train] = [this](const jobs::Job& j) { return run_train(j); };
    queue = std::make_unique<jobs::JobQueue>(ws.path("jobs"), std::move(handlers));
    // The default also sets SO_REUSEPORT, which lets a second server share the port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  ~Impl() {
    server.stop();
    if (thread.joinable()) thread.join();
    queue->stop();
  }

  GatewayOptions options;
  Workspace ws;
  evalreport::SessionStore store;
  std::unique_ptr<jobs::JobQueue> queue;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> bound_port{0};
  std::mutex mutate_mu;
  std::mutex proba_mu;
  std::map<std::string, double> proba_cache;
  const classifier::ClassifierModel* proba_model = nullptr;

  // ---- helpers -------------------------------------------------------------

  std::shared_ptr<const classifier::ClassifierModel> require_model() const {
    if (!ws.has_model()) throw Error(ErrorCode::BackendUnavailable, "no trained model in the workspace");
    return ws.model();
  }

  imagery::ImageRecord require_record(const std::string& image_id) const {
    const auto manifest = ws.load_manifest();
    const auto* r = manifest.find(checked_id(image_id));
    if (!r) throw Error(ErrorCode::NotFound, "unknown image: " + image_id);
    return *r;
  }

  Image load_record_image(const imagery::ImageRecord& r) const { return read_image(ws.root() / r.file_path); }

  maskkit::BinaryMask require_mask(const std::string& mask_id) const {
    return load_stored_mask(ws, checked_id(mask_id));
  }

  std::optional<double> p_hotspot(const imagery::ImageRecord& r) {
    if (!ws.has_model()) return std::nullopt;
    const auto model = ws.model();
    std::lock_guard lock(proba_mu);
    if (proba_model != model.get()) {
      proba_cache.clear();
      proba_model = model.get();
    }
    const auto it = proba_cache.find(r.image_id);
    if (it != proba_cache.end()) return it->second;
    const double p = classifier::predict_proba(*model, load_record_image(r));
    proba_cache[r.image_id] = p;
    return p;
  }

  json model_identity() const {
    classifier::CheckpointInfo info;
    classifier::load_checkpoint(ws.model_path(), &info);
    std::string name = classifier::backbone_name(info.spec.backbone);
    if (info.spec.abm_enabled) name += "-abm";
    return {{"name", name}, {"spec", classifier::to_json(info.spec)}, {"manifest_hash", info.manifest_hash}};
  }

  struct CamOutput {
    apcam::Heatmap heatmap;
    std::string layer;
    maskkit::BinaryMask mask;
    std::string mask_id;
  };

  CamOutput run_cam(const imagery::ImageRecord& r, const httplib::Request& req) {
    const auto model = require_model();
    const auto& cfg = ws.config();
    apcam::CamRequest cr;
    cr.method = apcam::method_from_name(req.has_param("method") ? req.get_param_value("method") : cfg.cam_method);
    cr.layer = req.has_param("layer") ? req.get_param_value("layer") : std::string{};
    if (req.has_param("target")) {
      cr = apcam::cam_request_from_json(
          {{"method", apcam::method_name(cr.method)}, {"layer", cr.layer}, {"target_class", req.get_param_value("target")}});
    }
    const double threshold = query_double(req, "threshold", cfg.cam_threshold);
    std::optional<std::size_t> min_area = cfg.cam_min_area;
    if (req.has_param("min_area")) min_area = query_size(req, "min_area", 0);

    std::lock_guard lock(mutate_mu);
    const auto art = store_cam_mask(ws, *model, r, cr, threshold, min_area);
    return {art.heatmap, art.layer, art.mask, art.mask_id};
  }

  // ---- job handlers --------------------------------------------------------

  json run_inpaint(const jobs::Job& job) {
    const auto record = require_record(job.payload.at("image_id").get<std::string>());
    const Image image = load_record_image(record);
    auto request = inpaint::request_from_json(job.payload.at("request"));
    request.mask = require_mask(job.payload.at("mask_id").get<std::string>());
    const auto& cfg = ws.config();
    auto backend = inpaint::make_backend(cfg.inpaint_backend, cfg.inpaint_url);
    const auto result = inpaint::inpaint(image, request, *backend);
    json candidates = json::array();
    const fs::path dir = ws.path("jobs/" + job.job_id);
    fs::create_directories(dir);
    for (std::size_t k = 0; k < result.candidates.size(); ++k) {
      const std::string id = "c" + std::to_string(k);
      write_png(dir / (id + ".png"), result.candidates[k].image);
      candidates.push_back(
          {{"candidate_id", id}, {"seed", result.candidates[k].seed}, {"path", "jobs/" + job.job_id + "/" + id + ".png"}});
    }
    return {{"candidates", candidates}, {"backend", result.backend}, {"warnings", result.warnings}};
  }

  json run_train(const jobs::Job& job) {
    auto spec = ws.config().model;
    auto tc = ws.config().train;
    if (job.payload.contains("model")) {
      json merged = classifier::to_json(spec);
      merged.update(job.payload["model"]);
      spec = classifier::model_spec_from_json(merged);
    }
    if (job.payload.contains("train")) {
      json merged = classifier::to_json(tc);
      merged.update(job.payload["train"]);
      tc = classifier::train_config_from_json(merged);
    }
    const auto outcome = train_workspace_model(ws, spec, tc);
    json out = {{"training", classifier::to_json(outcome.log)}};
    if (outcome.test_metrics) out["test_metrics"] = classifier::to_json(*outcome.test_metrics);
    return out;
  }

  // ---- plumbing ------------------------------------------------------------

  using Fn = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Fn guarded(Fn fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      } catch (const json::exception& e) {
        send_error(res, ErrorCode::InvalidArgument, e.what());
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", {{"code", "INTERNAL"}, {"message", e.what()}}}});
      }
    };
  }

  // Mutations run one at a time. With an Idempotency-Key header, the first
  // response is stored and replayed for retries carrying the same payload.
  Fn mutating(Fn fn) {
    return guarded([this, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutate_mu_outer);
      const std::string key = req.get_header_value("Idempotency-Key");
      if (key.empty()) {
        fn(req, res);
        return;
      }
      const fs::path path = ws.path("idempotency/" + sha256_hex(req.method + " " + req.path + " " + key) + ".json");
      const std::string body_hash = sha256_hex(req.body);
      if (fs::exists(path)) {
        const auto bytes = read_file(path);
        const auto stored = json::parse(bytes.begin(), bytes.end());
        if (stored.at("body_sha256") != body_hash) {
          throw Error(ErrorCode::InvalidArgument, "Idempotency-Key reused with a different payload");
        }
        res.status = stored.at("status").get<int>();
        res.set_content(stored.at("body").get<std::string>(), stored.at("content_type").get<std::string>());
        res.set_header("Idempotent-Replay", "true");
        return;
      }
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      }
      if (res.status < 500) {
        const json stored = {{"body_sha256", body_hash},
                             {"status", res.status},
                             {"body", res.body},
                             {"content_type", res.get_header_value("Content-Type")}};
        write_file_atomic(path, stored.dump());
      }
    });
  }

  std::mutex mutate_mu_outer;

  void routes() {
    auto& s = server;
    const std::string api = "/api/v1";

    s.Get(api + "/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
          }));

    s.Get(api + "/config", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, to_json(ws.config()));
          }));

    s.Get(api + "/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto manifest = ws.load_manifest();
            std::optional<imagery::Label> label;
            if (req.has_param("label")) label = imagery::label_from_name(req.get_param_value("label"));
            const std::size_t page = std::max<std::size_t>(1, query_size(req, "page", 1));
            const std::size_t page_size = std::clamp<std::size_t>(query_size(req, "page_size", 50), 1, 500);
            std::vector<const imagery::ImageRecord*> matching;
            for (const auto& r : manifest.records) {
              if (!label || r.label() == *label) matching.push_back(&r);
            }
            json items = json::array();
            for (std::size_t i = (page - 1) * page_size; i < matching.size() && i < page * page_size; ++i) {
              json item = imagery::to_json(*matching[i]);
              const auto p = p_hotspot(*matching[i]);
              item["p_hotspot"] = p ? json(*p) : json(nullptr);
              items.push_back(item);
            }
            send_json(res, 200,
                      {{"items", items}, {"page", page}, {"page_size", page_size}, {"total", matching.size()}});
          }));

    s.Get(api + R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = require_record(req.matches[1]);
            json item = imagery::to_json(r);
            const auto p = p_hotspot(r);
            item["p_hotspot"] = p ? json(*p) : json(nullptr);
            send_json(res, 200, item);
          }));

    s.Get(api + R"(/images/([^/]+)/file)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = require_record(req.matches[1]);
            res.set_content(as_string(encode_png(load_record_image(r))), "image/png");
          }));

    s.Get(api + R"(/images/([^/]+)/cam)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = require_record(req.matches[1]);
            const auto out = run_cam(r, req);
            const Image image = load_record_image(r);
            send_json(res, 200,
                      {{"image_id", r.image_id},
                       {"layer", out.layer},
                       {"heatmap_png", base64_encode(encode_gray_png(apcam::to_gray(out.heatmap)))},
                       {"overlay_png", base64_encode(encode_png(apcam::overlay(image, out.heatmap)))},
                       {"colormap", kOverlayColormap},
                       {"mask_id", out.mask_id},
                       {"mask_png", base64_encode(maskkit::encode_mask_png(out.mask))},
                       {"mask_area", out.mask.area()},
                       {"width", out.mask.width()},
                       {"height", out.mask.height()}});
          }));

    s.Post(api + R"(/images/([^/]+)/mask)", mutating([this](const httplib::Request& req, httplib::Response& res) {
             const auto r = require_record(req.matches[1]);
             const json body = parse_body(req);
             const auto scribbles = maskkit::scribbles_from_json(body);
             maskkit::BinaryMask mask;
             const std::string mask_id = store_scribble_mask(ws, r, scribbles, &mask);
             send_json(res, 201,
                       {{"mask_id", mask_id},
                        {"image_id", r.image_id},
                        {"area", mask.area()},
                        {"width", mask.width()},
                        {"height", mask.height()},
                        {"url", "/api/v1/masks/" + mask_id}});
           }));

    s.Get(api + R"(/masks/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto mask = require_mask(req.matches[1]);
            res.set_content(as_string(maskkit::encode_mask_png(mask)), "image/png");
          }));

    s.Get(api + "/prompts", guarded([](const httplib::Request&, httplib::Response& res) {
            json arr = json::array();
            for (const auto& p : inpaint::prompt_catalog()) arr.push_back(inpaint::to_json(p));
            send_json(res, 200, arr);
          }));

    s.Post(api + "/inpaint", mutating([this](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             const auto request = inpaint::request_from_json(body);
             request.validate();
             const std::string mask_id = body.value("mask_id", std::string{});
             if (mask_id.empty()) throw Error(ErrorCode::InvalidArgument, "mask_id is required");
             const auto record = require_record(request.image_id);
             const auto mask = require_mask(mask_id);
             const Image image = load_record_image(record);
             if (mask.width() != image.width() || mask.height() != image.height()) {
               throw Error(ErrorCode::GeometryMismatch, "mask geometry differs from the image");
             }
             const json req_json = inpaint::to_json(request);
             const std::string job_id = queue->submit(
                 jobs::JobKind::Inpaint, {{"image_id", record.image_id}, {"mask_id", mask_id}, {"request", req_json}});

             evalreport::RedesignSession session;
             session.session_id = "sess-" + job_id.substr(4);
             session.image_id = record.image_id;
             session.mask_id = mask_id;
             session.inpaint_request = req_json;
             session.job_id = job_id;
             session.original_path = record.file_path;
             session.cam = mask_provenance(ws, mask_id);
             store.append(session);
             send_json(res, 202,
                       {{"job_id", job_id},
                        {"session_id", session.session_id},
                        {"state", "queued"},
                        {"warnings", request.warnings()}});
           }));

    s.Post(api + "/train", mutating([this](const httplib::Request& req, httplib::Response& res) {
             const json body = req.body.empty() ? json::object() : parse_body(req);
             const std::string job_id = queue->submit(jobs::JobKind::Train, body);
             send_json(res, 202, {{"job_id", job_id}, {"state", "queued"}});
           }));

    s.Get(api + R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = queue->get(checked_id(req.matches[1]));
            if (!job) throw Error(ErrorCode::NotFound, "unknown job: " + std::string(req.matches[1]));
            send_json(res, 200, jobs::to_json(*job));
          }));

    s.Get(api + R"(/jobs/([^/]+)/candidates)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = done_job(req.matches[1]);
            json out = json::array();
            for (const auto& c : job.result.at("candidates")) {
              json item = c;
              item["url"] = "/api/v1/jobs/" + job.job_id + "/candidates/" + c.at("candidate_id").get<std::string>();
              item["png"] = base64_encode(read_file(ws.path(c.at("path").get<std::string>())));
              out.push_back(item);
            }
            send_json(res, 200, {{"job_id", job.job_id}, {"candidates", out}, {"warnings", job.result.value("warnings", json::array())}});
          }));

    s.Get(api + R"(/jobs/([^/]+)/candidates/([^/]+))",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto job = done_job(req.matches[1]);
            const auto path = candidate_path(job, req.matches[2]);
            res.set_content(as_string(read_file(ws.path(path))), "image/png");
          }));

    s.Get(api + "/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
            json arr = json::array();
            for (const auto& s : store.latest()) arr.push_back(evalreport::to_json(s));
            send_json(res, 200, arr);
          }));

    s.Get(api + R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = store.find(checked_id(req.matches[1]));
            if (!session) throw Error(ErrorCode::NotFound, "unknown session: " + std::string(req.matches[1]));
            send_json(res, 200, evalreport::to_json(*session));
          }));

    s.Post(api + R"(/sessions/([^/]+)/select)", mutating([this](const httplib::Request& req, httplib::Response& res) {
             auto session = store.find(checked_id(req.matches[1]));
             if (!session) throw Error(ErrorCode::NotFound, "unknown session: " + std::string(req.matches[1]));
             const json body = parse_body(req);
             const std::string candidate = body.value("candidate_id", std::string{});
             if (candidate.empty()) throw Error(ErrorCode::InvalidArgument, "candidate_id is required");
             session->candidate_id = candidate;
             if (candidate == evalreport::kOriginalCandidate) {
               session->candidate_path = session->original_path;
             } else {
               session->candidate_path = candidate_path(done_job(session->job_id), candidate);
             }
             if (body.contains("notes")) session->notes = body["notes"].get<std::string>();
             if (body.contains("operator_seconds")) session->operator_seconds = body["operator_seconds"].get<double>();
             const auto model = require_model();
             evalreport::score_session(*model, *session, ws.root());
             session->revision = store.append(*session);
             json out = evalreport::to_json(*session);
             out["percentage_change"] =
                 *session->p_before > 0.0 ? json(100.0 * (*session->p_before - *session->p_after) / *session->p_before)
                                          : json(nullptr);
             send_json(res, 200, out);
           }));

    s.Get(api + "/reports/latest", guarded([this](const httplib::Request&, httplib::Response& res) {
            const auto sessions = store.latest();
            const json identity = ws.has_model() ? model_identity() : json::object();
            const auto report = evalreport::aggregate(sessions, identity);
            const json j = evalreport::to_json(report);
            {
              std::lock_guard lock(mutate_mu);
              write_file_atomic(ws.path("reports/latest.json"), j.dump(2));
              write_file_atomic(ws.path("reports/latest.csv"), evalreport::report_csv(report));
            }
            send_json(res, 200, j);
          }));

    s.Get(api + R"(/saliency/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto r = require_record(req.matches[1]);
            const auto cam = run_cam(r, req);
            const Image image = load_record_image(r);
            const auto region = saliency::salient_region(image, ws.config().saliency, r.image_id);
            json out = {{"image_id", r.image_id},
                        {"source", saliency::source_name(region.source)},
                        {"salient_png", base64_encode(maskkit::encode_mask_png(region.mask))},
                        {"salient_area", region.mask.area()},
                        {"ap_mask_id", cam.mask_id},
                        {"ap_mask_png", base64_encode(maskkit::encode_mask_png(cam.mask))},
                        {"ap_area", cam.mask.area()}};
            out["ratio_percent"] = saliency::ap_saliency_ratio(region.mask, cam.mask);
            send_json(res, 200, out);
          }));

    s.Post(api + R"(/images/([^/]+)/chroma)", mutating([this](const httplib::Request& req, httplib::Response& res) {
             const auto r = require_record(req.matches[1]);
             const json body = parse_body(req);
             const auto mask = require_mask(body.at("mask_id").get<std::string>());
             const auto params = saliency::chroma_params_from_json(body);
             const Image out = saliency::chrominance_alter(load_record_image(r), mask, params);
             const std::string id = "chroma-" + sha256_hex(r.image_id + body.dump()).substr(0, 16);
             write_png(ws.path("saliency/" + id + ".png"), out);
             write_file_atomic(ws.path("saliency/" + id + ".png.json"),
                               json{{"image_id", r.image_id}, {"mask_id", body.at("mask_id")}, {"params", saliency::to_json(params)}}.dump(2));
             send_json(res, 201, {{"altered_id", id}, {"png", base64_encode(encode_png(out))}});
           }));

    if (!options.static_dir.empty() && fs::is_directory(options.static_dir)) {
      s.set_mount_point("/", options.static_dir.string());
    }
  }

  jobs::Job done_job(const std::string& job_id) const {
    const auto job = queue->get(checked_id(job_id));
    if (!job) throw Error(ErrorCode::NotFound, "unknown job: " + job_id);
    if (job->state != jobs::JobState::Done) {
      std::string msg = "job " + job_id + " is " + jobs::state_name(job->state) + "; candidates need a finished job";
      if (job->state == jobs::JobState::Failed) msg += " (" + job->error_code + ": " + job->error_message + ")";
      throw Error(ErrorCode::IllegalTransition, msg);
    }
    return *job;
  }

  static std::string candidate_path(const jobs::Job& job, const std::string& candidate_id) {
    for (const auto& c : job.result.at("candidates")) {
      if (c.at("candidate_id") == candidate_id) return c.at("path").get<std::string>();
    }
    throw Error(ErrorCode::MissingCandidate, "job " + job.job_id + " has no candidate " + candidate_id);
  }

};

Gateway::Gateway(GatewayOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
  auto& s = impl_->server;
  const int port = impl_->options.port == 0 ? s.bind_to_any_port(impl_->options.host)
                                            : (s.bind_to_port(impl_->options.host, impl_->options.port)
                                                   ? impl_->options.port
                                                   : -1);
  if (port <= 0) {
    throw Error(ErrorCode::IoError,
                "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  impl_->bound_port = port;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Gateway::serve() {
  start();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

int Gateway::port() const noexcept { return impl_->bound_port.load(); }

}  // namespace saferoad::gateway
