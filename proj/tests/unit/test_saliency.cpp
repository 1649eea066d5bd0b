#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "saferoad/error.hpp"
#include "saferoad/image.hpp"
#include "saferoad/saliency.hpp"
#include "saferoad/util.hpp"
#include "toy.hpp"

using namespace saferoad;
using namespace saferoad::saliency;
using maskkit::BinaryMask;
namespace fs = std::filesystem;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no saferoad::Error thrown";
  return ErrorCode::IoError;
}

Image filled(int w, int h, Rgb c) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, c);
  return img;
}

BinaryMask rect(int w, int h, int x0, int y0, int x1, int y1) {
  BinaryMask m({w, h});
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(x, y, true);
  return m;
}

BinaryMask random_mask(int w, int h, std::mt19937_64& rng, int one_in) {
  BinaryMask m({w, h});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, rng() % static_cast<unsigned>(one_in) == 0);
  return m;
}

std::size_t count_both(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) n += a.at(x, y) && b.at(x, y);
  return n;
}

// Hue of the chroma vector, straight from the BT.601 full-range matrix.
double oracle_hue(Rgb c) {
  const double cb = -0.168736 * c.r - 0.331264 * c.g + 0.5 * c.b;
  const double cr = 0.5 * c.r - 0.418688 * c.g - 0.081312 * c.b;
  double h = std::atan2(cr, cb) * 180.0 / std::numbers::pi;
  return h < 0 ? h + 360.0 : h;
}

double circular_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

}  // namespace

TEST(Ratio, ConstructedMasks) {
  const auto ap = rect(64, 64, 10, 10, 30, 20);  // 200 px
  ASSERT_EQ(ap.area(), 200u);
  EXPECT_NEAR(ap_saliency_ratio(rect(64, 64, 0, 0, 64, 64), ap), 100.0, 1e-9);
  EXPECT_NEAR(ap_saliency_ratio(rect(64, 64, 40, 40, 60, 60), ap), 0.0, 1e-9);
  const auto half = rect(64, 64, 10, 10, 20, 20);  // 100 px of the AP mask
  EXPECT_NEAR(ap_saliency_ratio(half, ap), 50.0, 1e-9);
  EXPECT_EQ(ap_saliency_ratio(ap, ap), 100.0);
}

TEST(Ratio, Errors) {
  EXPECT_EQ(code_of([] { ap_saliency_ratio(rect(8, 8, 0, 0, 8, 8), BinaryMask({8, 8})); }), ErrorCode::EmptyApMask);
  EXPECT_EQ(code_of([] { ap_saliency_ratio(rect(8, 8, 0, 0, 2, 2), rect(9, 8, 0, 0, 2, 2)); }),
            ErrorCode::DimensionMismatch);
}

TEST(Ratio, RandomMasksMatchCountOracleAndAreMonotone) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ap = random_mask(32, 32, rng, 3);
    if (ap.empty()) continue;
    auto sal = random_mask(32, 32, rng, 4);
    const double want = 100.0 * static_cast<double>(count_both(sal, ap)) / static_cast<double>(ap.area());
    const double got = ap_saliency_ratio(sal, ap);
    EXPECT_NEAR(got, want, 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 100.0);
    const auto grown = maskkit::mask_union(sal, random_mask(32, 32, rng, 5));
    EXPECT_GE(ap_saliency_ratio(grown, ap), got);
  }
}

TEST(Builtin, UniformGrayIsNearlyEmpty) {
  const auto r = salient_region(filled(64, 64, {128, 128, 128}), BackendConfig{});
  EXPECT_EQ(r.source, SaliencySource::BuiltinBaseline);
  EXPECT_LE(r.mask.area(), 64u * 64u / 100u);
}

TEST(Builtin, BrightDiskOnDarkField) {
  for (auto [size, cx, cy, rad] : {std::array{64, 40, 24, 7}, std::array{96, 30, 60, 9}, std::array{128, 64, 64, 10}}) {
    Image img = filled(size, size, {20, 20, 20});
    BinaryMask disk({size, size});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) {
          img.set(x, y, {240, 240, 240});
          disk.set(x, y, true);
        }
    const auto r = salient_region(img, BackendConfig{});
    EXPECT_GE(static_cast<double>(count_both(r.mask, disk)), 0.8 * static_cast<double>(disk.area())) << size;
  }
}

TEST(Builtin, MapIsNormalizedAndDeterministic) {
  std::mt19937_64 rng(3);
  const auto t = synth::make_toy_image(classifier::kHotspot, rng, 64);
  const auto a = spectral_residual(t.image);
  ASSERT_EQ(a.size(), 64u * 64u);
  double mx = 0;
  for (double v : a) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    mx = std::max(mx, v);
  }
  EXPECT_DOUBLE_EQ(mx, 1.0);
  EXPECT_EQ(spectral_residual(t.image), a);
}

TEST(Binarize, MeanPlusKStd) {
  const std::vector<double> v{0, 0, 0, 0, 0, 0, 0, 10};
  // mean 1.25, sd = sqrt(10.9375) = 3.307..., cut at k=1: 4.557
  const auto m = binarize(v, {8, 1}, 1.0);
  EXPECT_EQ(m.area(), 1u);
  EXPECT_TRUE(m.at(7, 0));
  EXPECT_EQ(binarize(std::vector<double>(8, 3.0), {8, 1}, 1.0).area(), 0u);
  EXPECT_EQ(binarize(v, {8, 1}, -1.0).area(), 8u);
}

TEST(Fixture, ReturnsExactlyTheStoredMask) {
  const auto dir = toy::scratch_dir("sal-fixture");
  std::mt19937_64 rng(2);
  const auto m = random_mask(20, 12, rng, 3);
  write_file_atomic(dir / "abc.png", maskkit::encode_mask_png(m));
  BackendConfig cfg;
  cfg.kind = "fixture";
  cfg.fixture_dir = dir;
  const auto r = salient_region(filled(20, 12, {1, 2, 3}), cfg, "abc");
  EXPECT_EQ(r.source, SaliencySource::Fixture);
  EXPECT_EQ(r.mask, m);
  EXPECT_EQ(code_of([&] { salient_region(filled(20, 12, {1, 2, 3}), cfg, "zzz"); }), ErrorCode::AdapterUnavailable);
  EXPECT_EQ(code_of([&] { salient_region(filled(21, 12, {1, 2, 3}), cfg, "abc"); }), ErrorCode::GeometryMismatch);
  cfg.fixture_dir = dir / "missing";
  EXPECT_EQ(code_of([&] { salient_region(filled(20, 12, {1, 2, 3}), cfg, "abc"); }), ErrorCode::AdapterUnavailable);
  cfg.kind = "gazeshift";
  EXPECT_EQ(code_of([&] { salient_region(filled(20, 12, {1, 2, 3}), cfg, "abc"); }), ErrorCode::AdapterUnavailable);
}

TEST(Report, AverageOfTwoAndExclusion) {
  const auto dir = toy::scratch_dir("sal-report");
  BackendConfig cfg;
  cfg.kind = "fixture";
  cfg.fixture_dir = dir;
  // AP masks of 100 px; salient masks covering 40 and 60 of them.
  write_file_atomic(dir / "a.png", maskkit::encode_mask_png(rect(20, 20, 0, 0, 4, 10)));
  write_file_atomic(dir / "b.png", maskkit::encode_mask_png(rect(20, 20, 0, 0, 6, 10)));
  write_file_atomic(dir / "c.png", maskkit::encode_mask_png(rect(20, 20, 0, 0, 20, 20)));
  const Image img = filled(20, 20, {9, 9, 9});
  const std::vector<SaliencyItem> items{{"a", img, rect(20, 20, 0, 0, 10, 10)},
                                        {"b", img, rect(20, 20, 0, 0, 10, 10)},
                                        {"c", img, BinaryMask({20, 20})}};
  const auto r = batch_saliency_report(items, cfg);
  EXPECT_DOUBLE_EQ(r.per_image.at("a"), 40.0);
  EXPECT_DOUBLE_EQ(r.per_image.at("b"), 60.0);
  ASSERT_TRUE(r.average);
  EXPECT_DOUBLE_EQ(*r.average, 50.0);
  EXPECT_EQ(r.excluded, std::vector<std::string>{"c"});
  const auto j = to_json(r);
  EXPECT_EQ(j.at("contributing"), 2);
  EXPECT_EQ(j.at("excluded").size(), 1u);
  EXPECT_NE(report_csv(r).find("average,50.000000"), std::string::npos);

  const std::vector<SaliencyItem> only_empty{{"c", img, BinaryMask({20, 20})}};
  const auto e = batch_saliency_report(only_empty, cfg);
  EXPECT_TRUE(e.per_image.empty());
  EXPECT_FALSE(e.average);
  EXPECT_EQ(e.excluded.size(), 1u);
  EXPECT_TRUE(to_json(e).at("average").is_null());
}

TEST(Report, FiveFixturesMatchHandMean) {
  const auto dir = toy::scratch_dir("sal-five");
  BackendConfig cfg;
  cfg.kind = "fixture";
  cfg.fixture_dir = dir;
  std::mt19937_64 rng(55);
  std::vector<SaliencyItem> items;
  double sum = 0;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "f" + std::to_string(i);
    const auto sal = random_mask(48, 32, rng, 2);
    BinaryMask ap({48, 32});
    while (ap.empty()) ap = random_mask(48, 32, rng, 3 + i);
    write_file_atomic(dir / (id + ".png"), maskkit::encode_mask_png(sal));
    items.push_back({id, filled(48, 32, {0, 0, 0}), ap});
    sum += 100.0 * static_cast<double>(count_both(sal, ap)) / static_cast<double>(ap.area());
  }
  const auto r = batch_saliency_report(items, cfg);
  ASSERT_EQ(r.per_image.size(), 5u);
  EXPECT_NEAR(*r.average, sum / 5.0, 1e-9);
  double again = 0;
  for (const auto& [id, v] : r.per_image) again += v;
  EXPECT_EQ(*r.average, again / 5.0);
}

TEST(Report, CamMasksFromToyModel) {
  const auto& t = toy::trained();
  std::vector<std::pair<std::string, Image>> images;
  for (const auto& h : toy::test_hotspots(4)) images.emplace_back("h" + std::to_string(images.size()), h.image);
  const auto r = batch_saliency_report(*t.model, images, CamMaskConfig{}, BackendConfig{});
  EXPECT_EQ(r.per_image.size() + r.excluded.size(), 4u);
  for (const auto& [id, v] : r.per_image) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
}

TEST(Config, JsonRoundTrip) {
  BackendConfig c;
  c.kind = "http";
  c.endpoint = "http://localhost:7000";
  c.k_std = 1.5;
  const auto back = backend_config_from_json(to_json(c));
  EXPECT_EQ(back.kind, "http");
  EXPECT_EQ(back.endpoint, c.endpoint);
  EXPECT_EQ(back.k_std, 1.5);
  ChromaParams p;
  p.strength = 0.3;
  p.mode = HueMode::Fixed;
  p.fixed_hue = 200;
  const auto q = chroma_params_from_json(to_json(p));
  EXPECT_EQ(q.strength, 0.3);
  EXPECT_EQ(q.mode, HueMode::Fixed);
  EXPECT_EQ(q.fixed_hue, 200);
}

namespace {

struct StubSaliency {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string mode = "mask";  // mask | map | error
  nlohmann::json last;

  StubSaliency() {
    server.Post("/saliency", [this](const httplib::Request& req, httplib::Response& res) {
      last = nlohmann::json::parse(req.body);
      if (mode == "error") {
        res.status = 500;
        return;
      }
      const Image in = decode_image(base64_decode(last.at("image").get<std::string>()));
      if (mode == "mask") {
        const auto m = rect(in.width(), in.height(), 0, 0, in.width() / 2, in.height());
        res.set_content(nlohmann::json{{"mask", base64_encode(maskkit::encode_mask_png(m))}}.dump(),
                        "application/json");
        return;
      }
      Gray8 g{in.width(), in.height(), std::vector<std::uint8_t>(in.pixel_count(), 10)};
      g.values[0] = 250;
      g.values[1] = 250;
      res.set_content(nlohmann::json{{"saliency", base64_encode(encode_gray_png(g))}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubSaliency() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST(Http, MaskMapAndErrors) {
  StubSaliency stub;
  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(stub.port);
  const Image img = filled(16, 8, {50, 60, 70});
  auto r = salient_region(img, cfg, "img-7");
  EXPECT_EQ(r.source, SaliencySource::ExternalModel);
  EXPECT_EQ(r.mask, rect(16, 8, 0, 0, 8, 8));
  EXPECT_EQ(stub.last.at("image_id"), "img-7");
  stub.mode = "map";
  r = salient_region(img, cfg, "img-7");
  EXPECT_EQ(r.mask.area(), 2u);
  EXPECT_TRUE(r.mask.at(0, 0) && r.mask.at(1, 0));
  stub.mode = "error";
  EXPECT_EQ(code_of([&] { salient_region(img, cfg, "img-7"); }), ErrorCode::AdapterUnavailable);
  cfg.endpoint = "http://127.0.0.1:1";
  EXPECT_EQ(code_of([&] { salient_region(img, cfg, "img-7"); }), ErrorCode::AdapterUnavailable);
}

TEST(Ycc, MatrixAndInverse) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const Rgb c{static_cast<std::uint8_t>(rng() & 255), static_cast<std::uint8_t>(rng() & 255),
                static_cast<std::uint8_t>(rng() & 255)};
    const Ycc y = to_ycc(c);
    EXPECT_NEAR(y.y, oracle::luma(c.r, c.g, c.b), 1e-9);
    EXPECT_EQ(to_rgb(y), c);
    if (!(c.r == c.g && c.g == c.b)) EXPECT_NEAR(hue_degrees(y), oracle_hue(c), 1e-9);
  }
}

TEST(Chroma, IdentityCases) {
  std::mt19937_64 rng(4);
  const auto t = synth::make_toy_image(classifier::kHotspot, rng, 48);
  ChromaParams p;
  p.strength = 0.0;
  EXPECT_EQ(chrominance_alter(t.image, t.disk_mask(), p), t.image);
  p.strength = 1.0;
  EXPECT_EQ(chrominance_alter(t.image, BinaryMask({48, 48}), p), t.image);
  EXPECT_EQ(code_of([&] { chrominance_alter(t.image, BinaryMask({40, 48}), p); }), ErrorCode::GeometryMismatch);
  p.strength = 1.5;
  EXPECT_EQ(code_of([&] { chrominance_alter(t.image, t.disk_mask(), p); }), ErrorCode::InvalidArgument);
}

TEST(Chroma, OutsideUntouchedAndLumaKeptOnRandomImages) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 12; ++trial) {
    Image img(40, 40);
    for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng() & 255);
    const auto region = random_mask(40, 40, rng, 2);
    ChromaParams p;
    p.strength = (trial % 4 + 1) / 4.0;
    p.mode = trial % 2 ? HueMode::Fixed : HueMode::AutoContrast;
    p.fixed_hue = static_cast<double>(rng() % 360);
    const Image out = chrominance_alter(img, region, p);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const Rgb a = img.at(x, y), b = out.at(x, y);
        if (!region.at(x, y)) {
          ASSERT_EQ(a, b);
        } else {
          ASSERT_LE(std::abs(oracle::luma(a.r, a.g, a.b) - oracle::luma(b.r, b.g, b.b)), 2.0);
        }
      }
  }
}

TEST(Chroma, GrayOnGreenTurnsTowardOppositeHue) {
  const Rgb green{40, 170, 60}, gray{128, 128, 128};
  Image img = filled(64, 64, green);
  const auto region = rect(64, 64, 24, 24, 40, 40);
  for (int y = 24; y < 40; ++y)
    for (int x = 24; x < 40; ++x) img.set(x, y, gray);
  const double want = std::fmod(oracle_hue(green) + 180.0, 360.0);
  EXPECT_NEAR(target_hue(img, region, ChromaParams{}), want, 1e-9);
  const Image out = chrominance_alter(img, region, ChromaParams{});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const Rgb a = img.at(x, y), b = out.at(x, y);
      if (!region.at(x, y)) {
        ASSERT_EQ(a, b);
        continue;
      }
      ASSERT_LE(circular_distance(oracle_hue(b), want), 15.0);
      ASSERT_LE(std::abs(oracle::luma(a.r, a.g, a.b) - oracle::luma(b.r, b.g, b.b)), 2.0);
      // Chroma grows from zero.
      ASSERT_FALSE(b.r == b.g && b.g == b.b);
    }
}

TEST(Chroma, StrengthScalesTheShift) {
  const Rgb green{40, 170, 60};
  Image img = filled(48, 48, green);
  const auto region = rect(48, 48, 16, 16, 32, 32);
  for (int y = 16; y < 32; ++y)
    for (int x = 16; x < 32; ++x) img.set(x, y, {128, 128, 128});
  double prev = -1;
  for (double s : {0.25, 0.5, 1.0}) {
    ChromaParams p;
    p.strength = s;
    const Rgb c = chrominance_alter(img, region, p).at(20, 20);
    const Ycc y = to_ycc(c);
    const double chroma = std::hypot(y.cb - 128, y.cr - 128);
    EXPECT_GT(chroma, prev);
    prev = chroma;
  }
}

TEST(Chroma, GrayRingFallsBackToFixedHue) {
  Image img = filled(32, 32, {90, 90, 90});
  const auto region = rect(32, 32, 8, 8, 16, 16);
  ChromaParams p;
  p.fixed_hue = 300;
  EXPECT_FALSE(mean_hue(img, maskkit::mask_complement(region)));
  EXPECT_DOUBLE_EQ(target_hue(img, region, p), 300.0);
  p.mode = HueMode::Fixed;
  p.fixed_hue = -30;
  EXPECT_DOUBLE_EQ(target_hue(img, region, p), 330.0);
}
