#include <gtest/gtest.h>

#include <httplib.h>

#include <chrono>
#include <thread>

#include "saferoad/classifier.hpp"
#include "saferoad/error.hpp"
#include "saferoad/gateway.hpp"
#include "saferoad/image.hpp"
#include "saferoad/inpaint.hpp"
#include "saferoad/jobs.hpp"
#include "saferoad/maskkit.hpp"
#include "saferoad/util.hpp"
#include "saferoad/workspace.hpp"
#include "toy.hpp"

using namespace saferoad;
using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const fs::path& fixture_dir() {
  static const fs::path dir = [] {
    auto d = toy::scratch_dir("gw-fixture");
    toy::build_fixture_workspace(d, 6);
    return d;
  }();
  return dir;
}

fs::path copy_fixture(const std::string& tag) {
  const auto dst = toy::scratch_dir(tag);
  fs::copy(fixture_dir(), dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  return dst;
}

struct Live {
  explicit Live(const fs::path& root) : gw(gateway::GatewayOptions{root, "127.0.0.1", 0, {}}) {
    port = gw.start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(60, 0);
  }
  gateway::Gateway gw;
  int port = 0;
  std::unique_ptr<httplib::Client> client;

  json get(const std::string& path, int want = 200) {
    auto r = client->Get(path.c_str());
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, want) << path << " " << r->body;
    return json::parse(r->body);
  }
  json post(const std::string& path, const json& body, int want, const httplib::Headers& h = {}) {
    auto r = client->Post(path.c_str(), h, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, want) << path << " " << r->body;
    return json::parse(r->body);
  }
  json wait_job(const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      const auto j = get("/api/v1/jobs/" + id);
      if (j.value("state", "") == "done" || j.value("state", "") == "failed") return j;
      std::this_thread::sleep_for(20ms);
    }
    ADD_FAILURE() << "job did not finish: " << id;
    return {};
  }
};

Live& shared() {
  static Live live(copy_fixture("gw-shared"));
  return live;
}

imagery::ImageRecord first_hotspot(const fs::path& root) {
  Workspace ws(root);
  for (const auto& r : ws.load_manifest().records)
    if (r.label() == imagery::Label::Hotspot) return r;
  throw std::runtime_error("fixture has no hotspot image");
}

std::string make_mask(Live& live, const std::string& image_id) {
  const json strokes = {{"strokes", {{{"radius", 6.0}, {"mode", "paint"}, {"points", {{20, 20}, {44, 40}}}}}}};
  return live.post("/api/v1/images/" + image_id + "/mask", strokes, 201).at("mask_id");
}

json inpaint_body(const std::string& image_id, const std::string& mask_id) {
  return {{"image_id", image_id}, {"mask_id", mask_id}, {"design_name", "roundabout"}, {"seed", 5}, {"n_candidates", 2}};
}

}  // namespace

TEST(Status, ErrorCodeMapping) {
  EXPECT_EQ(gateway::http_status(ErrorCode::InvalidArgument), 400);
  EXPECT_EQ(gateway::http_status(ErrorCode::NotFound), 404);
  EXPECT_EQ(gateway::http_status(ErrorCode::IllegalTransition), 409);
  EXPECT_EQ(gateway::http_status(ErrorCode::EmptyApMask), 422);
  EXPECT_EQ(gateway::http_status(ErrorCode::BackendUnavailable), 503);
  EXPECT_EQ(gateway::http_status(ErrorCode::BackendTimeout), 503);
  EXPECT_EQ(gateway::http_status(ErrorCode::IoError), 500);
}

TEST(Gateway, HealthAndPromptCatalog) {
  auto& live = shared();
  EXPECT_EQ(live.get("/api/v1/health").at("status"), "ok");
  const auto prompts = live.get("/api/v1/prompts");
  ASSERT_EQ(prompts.size(), 7u);
  ASSERT_EQ(prompts.size(), inpaint::prompt_catalog().size());
  for (std::size_t i = 0; i < prompts.size(); ++i)
    EXPECT_EQ(prompts[i], inpaint::to_json(inpaint::prompt_catalog()[i]));
}

TEST(Gateway, ImagesFilterPaginateAndScore) {
  auto& live = shared();
  const auto all = live.get("/api/v1/images?label=hotspot&page_size=500");
  EXPECT_EQ(all.at("total"), 18);
  Workspace ws(fixture_dir());
  const auto model = ws.model();
  const auto manifest = ws.load_manifest();
  for (const auto& item : all.at("items")) {
    EXPECT_EQ(item.at("label"), "hotspot");
    const auto* rec = manifest.find(item.at("image_id").get<std::string>());
    ASSERT_TRUE(rec);
    EXPECT_DOUBLE_EQ(item.at("p_hotspot").get<double>(),
                     classifier::predict_proba(*model, read_image(ws.path(rec->file_path))));
  }
  const auto p1 = live.get("/api/v1/images?label=hotspot&page=1&page_size=5");
  const auto p4 = live.get("/api/v1/images?label=hotspot&page=4&page_size=5");
  EXPECT_EQ(p1.at("items").size(), 5u);
  EXPECT_EQ(p4.at("items").size(), 3u);
  EXPECT_EQ(p1.at("items")[0].at("image_id"), all.at("items")[0].at("image_id"));
  EXPECT_EQ(live.get("/api/v1/images?label=bogus", 400).at("error").at("code"), "INVALID_ARGUMENT");
  EXPECT_EQ(live.get("/api/v1/images?page=-2", 400).at("error").at("code"), "INVALID_ARGUMENT");
  EXPECT_EQ(live.get("/api/v1/images/nope", 404).at("error").at("code"), "NOT_FOUND");
  auto escape = live.client->Get("/api/v1/images/..%2F..%2Fetc/file");
  ASSERT_TRUE(escape);
  EXPECT_EQ(escape->status, 404);
}

TEST(Gateway, ImageFileIsThePngOnDisk) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  auto r = live.client->Get(("/api/v1/images/" + rec.image_id + "/file").c_str());
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  const Bytes body(r->body.begin(), r->body.end());
  EXPECT_EQ(decode_image(body), read_image(fixture_dir() / rec.file_path));
}

TEST(Gateway, CamReturnsHeatmapAndStoredMask) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto cam = live.get("/api/v1/images/" + rec.image_id + "/cam?method=gradcam&threshold=0.5");
  EXPECT_EQ(cam.at("layer"), "block3");
  const auto heat = decode_gray_png(base64_decode(cam.at("heatmap_png").get<std::string>()));
  EXPECT_EQ(heat.width, toy::kImageSize);
  const auto mask = maskkit::decode_mask_png(base64_decode(cam.at("mask_png").get<std::string>()));
  EXPECT_EQ(mask.area(), cam.at("mask_area").get<std::size_t>());
  EXPECT_GT(mask.area(), 0u);

  // Same request, same mask id; the stored mask is served back.
  const auto again = live.get("/api/v1/images/" + rec.image_id + "/cam?method=gradcam&threshold=0.5");
  EXPECT_EQ(again.at("mask_id"), cam.at("mask_id"));
  auto r = live.client->Get(("/api/v1/masks/" + cam.at("mask_id").get<std::string>()).c_str());
  ASSERT_TRUE(r);
  EXPECT_EQ(maskkit::decode_mask_png(Bytes(r->body.begin(), r->body.end())), mask);

  EXPECT_EQ(live.get("/api/v1/images/" + rec.image_id + "/cam?threshold=1.5", 400).at("error").at("code"),
            "INVALID_ARGUMENT");
  EXPECT_EQ(live.get("/api/v1/images/" + rec.image_id + "/cam?layer=block9", 400).at("error").at("code"),
            "LAYER_NOT_FOUND");
  EXPECT_EQ(live.get("/api/v1/images/" + rec.image_id + "/cam?method=lime", 400).at("error").at("code"),
            "INVALID_ARGUMENT");
}

TEST(Gateway, ScribbleMaskMatchesLocalRasterization) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const json body = {{"strokes",
                      {{{"radius", 4.0}, {"mode", "paint"}, {"points", {{5, 5}, {30, 12}, {50, 50}}}},
                       {{"radius", 3.0}, {"mode", "erase"}, {"points", {{30, 12}}}}}}};
  const auto out = live.post("/api/v1/images/" + rec.image_id + "/mask", body, 201);
  const auto local = maskkit::rasterize_scribbles(maskkit::scribbles_from_json(body), {toy::kImageSize, toy::kImageSize});
  EXPECT_EQ(out.at("area").get<std::size_t>(), local.area());
  auto r = live.client->Get(out.at("url").get<std::string>().c_str());
  ASSERT_TRUE(r);
  EXPECT_EQ(maskkit::decode_mask_png(Bytes(r->body.begin(), r->body.end())), local);
  EXPECT_EQ(live.post("/api/v1/images/" + rec.image_id + "/mask", json{{"strokes", 3}}, 400).at("error").at("code"),
            "INVALID_ARGUMENT");
  auto bad = live.client->Post(("/api/v1/images/" + rec.image_id + "/mask").c_str(), "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST(Gateway, InpaintCfgOutOfRangeNamesTheBound) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto mask_id = make_mask(live, rec.image_id);
  auto body = inpaint_body(rec.image_id, mask_id);
  body["cfg_scale"] = 31;
  const auto err = live.post("/api/v1/inpaint", body, 400);
  EXPECT_EQ(err.at("error").at("code"), "INVALID_ARGUMENT");
  EXPECT_NE(err.at("error").at("message").get<std::string>().find("[0,30]"), std::string::npos);

  body["cfg_scale"] = 12;
  body["mask_id"] = "scr-missing";
  EXPECT_EQ(live.post("/api/v1/inpaint", body, 404).at("error").at("code"), "NOT_FOUND");
  body["mask_id"] = mask_id;
  body["design_name"] = "tunnel";
  EXPECT_EQ(live.post("/api/v1/inpaint", body, 404).at("error").at("code"), "NOT_FOUND");
  body.erase("design_name");
  EXPECT_EQ(live.post("/api/v1/inpaint", body, 400).at("error").at("code"), "INVALID_ARGUMENT");
}

TEST(Gateway, InpaintJobCandidatesAndSelection) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto mask_id = make_mask(live, rec.image_id);
  auto body = inpaint_body(rec.image_id, mask_id);
  body["cfg_scale"] = 25;
  const auto sub = live.post("/api/v1/inpaint", body, 202);
  EXPECT_EQ(sub.at("warnings").size(), 1u);
  const std::string job_id = sub.at("job_id");
  const std::string session_id = sub.at("session_id");
  EXPECT_EQ(live.wait_job(job_id).at("state"), "done");

  const auto cands = live.get("/api/v1/jobs/" + job_id + "/candidates");
  ASSERT_EQ(cands.at("candidates").size(), 2u);
  const Image original = read_image(fixture_dir() / rec.file_path);
  for (const auto& c : cands.at("candidates")) {
    const Image img = decode_image(base64_decode(c.at("png").get<std::string>()));
    EXPECT_EQ(img.width(), original.width());
    EXPECT_NE(img, original);
    auto r = live.client->Get(c.at("url").get<std::string>().c_str());
    ASSERT_TRUE(r);
    EXPECT_EQ(decode_image(Bytes(r->body.begin(), r->body.end())), img);
  }
  EXPECT_EQ(live.get("/api/v1/jobs/" + job_id + "/candidates/c9", 404).at("error").at("code"), "MISSING_CANDIDATE");

  const auto picked = live.post("/api/v1/sessions/" + session_id + "/select", {{"candidate_id", "c1"}}, 200);
  EXPECT_EQ(picked.at("candidate_id"), "c1");
  EXPECT_EQ(picked.at("revision"), 2);
  EXPECT_EQ(picked.at("cam").at("mask_source"), "scribble");
  const double before = picked.at("p_before");
  const double after = picked.at("p_after");
  EXPECT_NEAR(picked.at("percentage_change").get<double>(), 100.0 * (before - after) / before, 1e-12);

  const auto orig = live.post("/api/v1/sessions/" + session_id + "/select", {{"candidate_id", "original"}}, 200);
  EXPECT_EQ(orig.at("percentage_change").get<double>(), 0.0);
  EXPECT_EQ(orig.at("p_before"), orig.at("p_after"));
  EXPECT_EQ(live.get("/api/v1/sessions/" + session_id).at("revision"), 3);

  const auto report = live.get("/api/v1/reports/latest");
  bool found = false;
  for (const auto& s : report.at("sessions"))
    if (s.at("session_id") == session_id) {
      found = true;
      EXPECT_EQ(s.at("candidate_id"), "original");
    }
  EXPECT_TRUE(found);
  EXPECT_TRUE(report.contains("mean_relative_drop_percent"));
  EXPECT_TRUE(report.contains("drop_of_means_percent"));
  EXPECT_EQ(report.at("model").at("name"), "tinycnn");

  EXPECT_EQ(live.post("/api/v1/sessions/" + session_id + "/select", {{"candidate_id", "c7"}}, 404).at("error").at("code"),
            "MISSING_CANDIDATE");
  EXPECT_EQ(live.post("/api/v1/sessions/sess-none/select", {{"candidate_id", "c0"}}, 404).at("error").at("code"),
            "NOT_FOUND");
  EXPECT_EQ(live.post("/api/v1/sessions/" + session_id + "/select", json::object(), 400).at("error").at("code"),
            "INVALID_ARGUMENT");
  EXPECT_EQ(live.get("/api/v1/jobs/job-none", 404).at("error").at("code"), "NOT_FOUND");
}

TEST(Gateway, CandidatesOfFailedJobConflict) {
  const auto root = copy_fixture("gw-conflict");
  {
    jobs::Job j;
    j.job_id = "job-waiting";
    j.kind = jobs::JobKind::Report;
    j.state = jobs::JobState::Queued;
    j.created_at = "2024-01-01T00:00:00Z";
    write_file_atomic(root / "jobs" / "job-waiting.json", jobs::to_json(j).dump());
  }
  Live live(root);
  // The gateway has no report worker; the queued job is failed on startup.
  const auto job = live.get("/api/v1/jobs/job-waiting");
  EXPECT_EQ(job.at("state"), "failed");
  EXPECT_EQ(job.at("error").at("code"), "BACKEND_UNAVAILABLE");
  EXPECT_EQ(live.get("/api/v1/jobs/job-waiting/candidates", 409).at("error").at("code"), "ILLEGAL_TRANSITION");
}

TEST(Gateway, IdempotencyKeyReplaysFirstResponse) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto mask_id = make_mask(live, rec.image_id);
  const auto body = inpaint_body(rec.image_id, mask_id);
  const httplib::Headers key{{"Idempotency-Key", "retry-abc"}};
  const auto first = live.post("/api/v1/inpaint", body, 202, key);
  auto r = live.client->Post("/api/v1/inpaint", key, body.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 202);
  EXPECT_EQ(r->get_header_value("Idempotent-Replay"), "true");
  EXPECT_EQ(json::parse(r->body), first);
  const auto sessions = live.get("/api/v1/sessions");
  int with_job = 0;
  for (const auto& s : sessions)
    if (s.at("job_id") == first.at("job_id")) ++with_job;
  EXPECT_EQ(with_job, 1);

  auto other = body;
  other["seed"] = 99;
  EXPECT_EQ(live.post("/api/v1/inpaint", other, 400, key).at("error").at("code"), "INVALID_ARGUMENT");
  // Without a key each call is a new job.
  EXPECT_NE(live.post("/api/v1/inpaint", body, 202).at("job_id"), first.at("job_id"));
  live.wait_job(first.at("job_id"));
}

TEST(Gateway, SaliencyRatioAndEmptyApMask) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto out = live.get("/api/v1/saliency/" + rec.image_id);
  const auto salient = maskkit::decode_mask_png(base64_decode(out.at("salient_png").get<std::string>()));
  const auto ap = maskkit::decode_mask_png(base64_decode(out.at("ap_mask_png").get<std::string>()));
  EXPECT_EQ(salient.area(), out.at("salient_area").get<std::size_t>());
  const double want =
      100.0 * static_cast<double>(maskkit::mask_intersect(salient, ap).area()) / static_cast<double>(ap.area());
  EXPECT_NEAR(out.at("ratio_percent").get<double>(), want, 1e-9);
  EXPECT_EQ(live.get("/api/v1/saliency/" + rec.image_id + "?min_area=100000", 422).at("error").at("code"),
            "EMPTY_AP_MASK");
}

TEST(Gateway, ChromaAlterationStoresOutput) {
  auto& live = shared();
  const auto rec = first_hotspot(fixture_dir());
  const auto mask_id = make_mask(live, rec.image_id);
  const auto out = live.post("/api/v1/images/" + rec.image_id + "/chroma", {{"mask_id", mask_id}}, 201);
  const Image img = decode_image(base64_decode(out.at("png").get<std::string>()));
  const Image original = read_image(fixture_dir() / rec.file_path);
  EXPECT_NE(img, original);
  EXPECT_EQ(img.width(), original.width());
  EXPECT_EQ(live.post("/api/v1/images/" + rec.image_id + "/chroma", {{"mask_id", "scr-gone"}}, 404)
                .at("error")
                .at("code"),
            "NOT_FOUND");
}

TEST(Gateway, ReportWithoutSessionsIsNotFound) {
  Live live(copy_fixture("gw-empty"));
  EXPECT_EQ(live.get("/api/v1/reports/latest", 404).at("error").at("code"), "NO_SCORED_SESSIONS");
  EXPECT_EQ(live.get("/api/v1/sessions").size(), 0u);
}

TEST(Gateway, RestartLosesNoSessionsOrJobResults) {
  const auto root = copy_fixture("gw-restart");
  const auto rec = first_hotspot(root);
  std::string job_id, session_id;
  json scored;
  {
    Live live(root);
    const auto mask_id = make_mask(live, rec.image_id);
    const auto sub = live.post("/api/v1/inpaint", inpaint_body(rec.image_id, mask_id), 202);
    job_id = sub.at("job_id");
    session_id = sub.at("session_id");
    ASSERT_EQ(live.wait_job(job_id).at("state"), "done");
    scored = live.post("/api/v1/sessions/" + session_id + "/select", {{"candidate_id", "c0"}}, 200);
    live.gw.stop();
  }
  Live again(root);
  EXPECT_EQ(again.get("/api/v1/jobs/" + job_id).at("state"), "done");
  EXPECT_EQ(again.get("/api/v1/jobs/" + job_id + "/candidates").at("candidates").size(), 2u);
  const auto s = again.get("/api/v1/sessions/" + session_id);
  EXPECT_EQ(s.at("p_after"), scored.at("p_after"));
  EXPECT_EQ(s.at("candidate_id"), "c0");
  EXPECT_EQ(again.get("/api/v1/reports/latest").at("sessions").size(), 1u);
}

TEST(Gateway, BindFailureIsIoError) {
  auto& live = shared();
  gateway::Gateway clash(gateway::GatewayOptions{copy_fixture("gw-clash"), "127.0.0.1", live.port, {}});
  try {
    clash.start();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(Gateway, ServesStaticConsoleAssets) {
  const auto root = copy_fixture("gw-static");
  const auto web = root / "web";
  fs::create_directories(web);
  write_file_atomic(web / "index.html", "<html>console</html>");
  gateway::Gateway gw(gateway::GatewayOptions{root, "127.0.0.1", 0, web});
  httplib::Client c("127.0.0.1", gw.start());
  auto r = c.Get("/index.html");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>console</html>");
}
