#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "saferoad/error.hpp"
#include "saferoad/image.hpp"
#include "saferoad/imagery.hpp"
#include "saferoad/util.hpp"
#include "toy.hpp"

using namespace saferoad;
using namespace saferoad::imagery;
namespace fs = std::filesystem;

TEST(PlanCaptures, ThreeTilesSweepOrder) {
  const auto p = plan_captures({40.7, -74.0}, 240, 80, 0);
  EXPECT_EQ(p.headings, (std::vector<double>{280, 0, 80}));
  EXPECT_EQ(p.per_image_fov, 80);
}

TEST(PlanCaptures, SingleTileAndTwoTiles) {
  EXPECT_EQ(plan_captures({0, 0}, 80, 80, 90).headings, std::vector<double>{90});
  EXPECT_EQ(plan_captures({0, 0}, 240, 120, 0).headings, (std::vector<double>{300, 60}));
  EXPECT_EQ(plan_captures({0, 0}, 360, 90, 0).headings.size(), 4u);
}

TEST(PlanCaptures, RejectsBadFov) {
  EXPECT_THROW(plan_captures({0, 0}, 80, 120, 0), Error);
  EXPECT_THROW(plan_captures({0, 0}, 400, 80, 0), Error);
  EXPECT_THROW(plan_captures({0, 0}, 240, 0, 0), Error);
}

namespace {

ImageRecord rec(const std::string& id, LatLon p) {
  ImageRecord r;
  r.image_id = id;
  r.location = p;
  r.file_path = "imagery/" + id + ".png";
  return r;
}

}  // namespace

TEST(StratifiedSplit, TenRecords) {
  std::vector<ImageRecord> rs;
  std::map<std::string, Label> labels;
  for (int i = 0; i < 10; ++i) {
    const LatLon p{40.0 + i * 0.01, -74.0};
    rs.push_back(rec("r" + std::to_string(i), p));
    labels[location_key(p)] = i < 5 ? Label::Hotspot : Label::NonHotspot;
  }
  const auto m = build_manifest(rs, labels, 42, 0.3);
  const auto test = m.split(Split::Test);
  ASSERT_EQ(test.size(), 3u);
  int hot = 0;
  for (const auto* r : test) hot += r->label() == Label::Hotspot;
  EXPECT_GE(hot, 1);
  EXPECT_LE(hot, 2);
  EXPECT_EQ(m.split(Split::Train).size(), 7u);

  const auto again = build_manifest(rs, labels, 42, 0.3);
  for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_EQ(again.records[i].split, m.records[i].split);
  EXPECT_EQ(manifest_hash(again), manifest_hash(m));
}

TEST(StratifiedSplit, PublishedCorpusSizes) {
  // 5,088 hotspot + 4,908 non-hotspot images at a 70/30 split.
  const auto counts = stratified_test_counts({{Label::Hotspot, 5088}, {Label::NonHotspot, 4908}}, 0.3);
  const std::size_t total = counts.at(Label::Hotspot) + counts.at(Label::NonHotspot);
  EXPECT_TRUE(total == 2998 || total == 2999);
  EXPECT_EQ(total, 2999u);  // round(2998.8)
  EXPECT_EQ(counts.at(Label::Hotspot), 1527u);  // remainders tie at .4; hotspot wins
  EXPECT_EQ(counts.at(Label::NonHotspot), 1472u);
}

TEST(StratifiedSplit, UnlabeledRecordRejected) {
  try {
    build_manifest({rec("x", {1, 1})}, {}, 1, 0.3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnlabeledRecord);
  }
}

TEST(ImageRecordLabel, ImmutableOnceSet) {
  ImageRecord r;
  r.assign_label(Label::Hotspot);
  r.assign_label(Label::Hotspot);
  EXPECT_THROW(r.assign_label(Label::NonHotspot), Error);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = toy::scratch_dir("manifest");
  std::vector<ImageRecord> rs{rec("a", {1, 2}), rec("b", {3, 4})};
  const auto m = build_manifest(rs, {{location_key({1, 2}), Label::Hotspot}, {location_key({3, 4}), Label::NonHotspot}},
                                7, 0.5);
  save_manifest(dir / "manifest", m);
  const auto back = load_manifest(dir / "manifest");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.split_seed, 7u);
  EXPECT_EQ(manifest_hash(back), manifest_hash(m));
}

TEST(Fetcher, FixtureModeAndCacheIdempotence) {
  const auto dir = toy::scratch_dir("fetch");
  const CaptureKey key{{40.7, -74.0}, 280, 80, 0};
  Image img(8, 8, {10, 20, 30});
  fs::create_directories(dir / "fx");
  write_png(dir / "fx" / (key.str() + ".png"), img);
  ProviderConfig cfg;
  cfg.fixture_mode = true;
  cfg.fixture_dir = dir / "fx";
  ImageFetcher f(dir / "ws", cfg);
  const auto r1 = f.fetch(key);
  EXPECT_EQ(r1.source, ImageSource::Fixture);
  EXPECT_EQ(r1.content_hash, sha256_hex(read_file(dir / "fx" / (key.str() + ".png"))));
  const auto r2 = f.fetch(key);
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(f.request_count(), 0u);
  EXPECT_EQ(read_image(f.absolute(r1.file_path)), img);

  try {
    f.fetch({{1, 1}, 0, 80, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixtureMissing);
  }
}

TEST(Fetcher, CorruptedCacheDetected) {
  const auto dir = toy::scratch_dir("corrupt");
  const CaptureKey key{{40.7, -74.0}, 0, 80, 0};
  fs::create_directories(dir / "fx");
  write_png(dir / "fx" / (key.str() + ".png"), Image(4, 4, {1, 2, 3}));
  ProviderConfig cfg;
  cfg.fixture_mode = true;
  cfg.fixture_dir = dir / "fx";
  const auto r = ImageFetcher(dir / "ws", cfg).fetch(key);
  write_file_atomic(dir / "ws" / r.file_path, std::string_view("tampered"));
  ImageFetcher again(dir / "ws", cfg);
  try {
    again.fetch(key);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CacheCorrupted);
  }
}

namespace {

struct StubProvider {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  explicit StubProvider(int status) {
    server.Get("/sv", [this, status](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      res.status = status;
      if (status == 200) {
        const auto png = encode_png(Image(4, 4, {9, 9, 9}));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      }
      res.set_header("X-Key", req.get_param_value("key"));
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubProvider() {
    server.stop();
    thread.join();
  }
  ProviderConfig config() const {
    ProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/sv";
    c.api_key = "test-key";
    c.max_retries = 1;
    c.retry_backoff = std::chrono::milliseconds(1);
    return c;
  }
};

}  // namespace

TEST(Fetcher, Provider404IsNoImageryAndNothingCached) {
  StubProvider stub(404);
  const auto dir = toy::scratch_dir("p404");
  ImageFetcher f(dir, stub.config());
  try {
    f.fetch({{40.7, -74.0}, 0, 80, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoImageryAtLocation);
  }
  EXPECT_TRUE(!fs::exists(dir / "imagery" / "cache") || fs::is_empty(dir / "imagery" / "cache"));
}

TEST(Fetcher, QuotaAfterRetries) {
  StubProvider stub(429);
  ImageFetcher f(toy::scratch_dir("p429"), stub.config());
  try {
    f.fetch({{40.7, -74.0}, 0, 80, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderQuotaExceeded);
  }
  EXPECT_EQ(stub.hits.load(), 2);
}

TEST(Fetcher, ProviderSuccessCountsOneRequest) {
  StubProvider stub(200);
  ImageFetcher f(toy::scratch_dir("p200"), stub.config());
  const auto plan = plan_captures({40.7, -74.0}, 240, 80, 0);
  const auto recs = f.fetch_plan(plan);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(f.request_count(), 3u);
  f.fetch_plan(plan);
  EXPECT_EQ(f.request_count(), 3u);
  EXPECT_EQ(recs[0].source, ImageSource::Provider);
}

TEST(Fetcher, UnreachableProviderIsNetworkFailure) {
  ProviderConfig c;
  c.endpoint = "http://127.0.0.1:1/sv";
  c.api_key = "k";
  c.max_retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  ImageFetcher f(toy::scratch_dir("pnet"), c);
  try {
    f.fetch({{0, 0}, 0, 80, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NetworkFailure);
  }
}
