#include <gtest/gtest.h>

#include <httplib.h>

#include <random>
#include <thread>

#include "saferoad/error.hpp"
#include "saferoad/image.hpp"
#include "saferoad/inpaint.hpp"
#include "saferoad/util.hpp"
#include "toy.hpp"

using namespace saferoad;
using namespace saferoad::inpaint;
namespace fs = std::filesystem;

namespace {

template <class F>
ErrorCode code_of(F&& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no saferoad::Error thrown";
  return ErrorCode::IoError;
}

// Design structure, subject word, class prompt: the published table rows.
struct Row {
  const char* design;
  const char* subject;
  const char* prompt;
};
const Row kTable[] = {
    {"chicane", "road-chicane0",
     "hoto of S-shaped curve in the vehicle driving path, created by offset curb extensions in straight road"},
    {"choker", "road-choker0",
     "photo of parallel or offsetting curb extensions, which effectively reduce road width for a specific distance"},
    {"curb_extension", "road-curb0",
     "photo of extension of sidewalk at intersection for reducing crossing distance and increasing visibility"},
    {"raised_median", "road-median0",
     "photo of barriers in center portion of street or roadway separating different lanes and traffic direction"},
    {"roundabout", "road-circle0",
     "photo of roundabouts or traffic circle with a circular central space in middle of an intersection"},
    {"street_plaza", "road-plaza0",
     "photo of small public spaces on road sides for pedestrians usage and is equipped with landscaping elements, "
     "street furniture, light poles, bench, flowers"},
    {"big_intersection", "road-intersection0",
     "photo of big intersection with bus corridors, different lane marking, crossways"},
};

Image two_tone(int size, Rgb background, Rgb patch, int x0, int y0, int side) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool in = x >= x0 && x < x0 + side && y >= y0 && y < y0 + side;
      img.set(x, y, in ? patch : background);
    }
  return img;
}

maskkit::BinaryMask square(int size, int x0, int y0, int side) {
  maskkit::BinaryMask m({size, size});
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m.set(x, y, true);
  return m;
}

Image noisy(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(size, size);
  for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng() & 255);
  return img;
}

InpaintRequest request_for(const maskkit::BinaryMask& m, std::int64_t seed = 4) {
  InpaintRequest r;
  r.image_id = "img";
  r.mask = m;
  r.prompt = find_prompt("chicane").full_prompt();
  r.seed = seed;
  return r;
}

void expect_outside_identical(const Image& a, const Image& b, const maskkit::BinaryMask& m) {
  ASSERT_EQ(a.width(), b.width());
  ASSERT_EQ(a.height(), b.height());
  std::size_t bad = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) bad += !m.at(x, y) && !(a.at(x, y) == b.at(x, y));
  EXPECT_EQ(bad, 0u);
}

}  // namespace

TEST(Catalog, SevenRowsMatchTable) {
  const auto& cat = prompt_catalog();
  ASSERT_EQ(cat.size(), 7u);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    EXPECT_EQ(cat[i].design_name, kTable[i].design);
    EXPECT_EQ(cat[i].subject_word, kTable[i].subject);
    if (cat[i].design_name == "chicane") {
      // The published row drops the leading "p".
      EXPECT_EQ(cat[i].class_prompt, std::string("p") + kTable[i].prompt);
    } else {
      EXPECT_EQ(cat[i].class_prompt, kTable[i].prompt);
    }
  }
}

TEST(Catalog, Lookups) {
  EXPECT_EQ(find_prompt("roundabout").subject_word, "road-circle0");
  EXPECT_NE(find_prompt("street_plaza").class_prompt.find("landscaping elements, street furniture"), std::string::npos);
  EXPECT_EQ(find_prompt("chicane").class_prompt.rfind("photo of S-shaped curve in the vehicle driving path", 0), 0u);
  EXPECT_EQ(code_of([] { find_prompt("speed_bump"); }), ErrorCode::NotFound);
  EXPECT_EQ(&prompt_catalog(), &prompt_catalog());
}

TEST(Catalog, FullPromptInsertsSubjectAfterPhotoOf) {
  EXPECT_EQ(find_prompt("big_intersection").full_prompt(),
            "photo of road-intersection0 big intersection with bus corridors, different lane marking, crossways");
  const auto j = to_json(find_prompt("roundabout"));
  EXPECT_EQ(j.at("subject_word"), "road-circle0");
  EXPECT_EQ(j.at("full_prompt").get<std::string>().rfind("photo of road-circle0 roundabouts", 0), 0u);
}

TEST(Recipe, DefaultsEqualPublishedValues) {
  const FinetuneRecipe r;
  EXPECT_EQ(r.dreambooth.epochs, 2000);
  EXPECT_EQ(r.dreambooth.learning_rate, 1e-6);
  EXPECT_EQ(r.dreambooth.class_images_per_class, 50);
  EXPECT_EQ(r.textual_inversion.epochs, 2000);
  EXPECT_EQ(r.textual_inversion.embedding_learning_rate, 0.005);
  EXPECT_EQ(r.textual_inversion.tokens_per_word, 8);
}

TEST(Recipe, DreamBoothFile) {
  const auto dir = toy::scratch_dir("recipe-db");
  fs::create_directories(dir / "in" / "round");
  for (const char* n : {"b.png", "a.jpg", "c.JPEG", "notes.txt"}) write_file_atomic(dir / "in" / "round" / n, "x");
  const auto r = emit_finetune_recipe({{"roundabout", dir / "in" / "round"}}, FinetuneMethod::DreamBooth, dir / "out");
  ASSERT_EQ(r.designs.size(), 1u);
  ASSERT_EQ(r.designs[0].instance_images.size(), 3u);
  EXPECT_EQ(r.designs[0].instance_images[0].filename(), "a.jpg");
  const auto bytes = read_file(dir / "out" / "recipe.json");
  const auto j = nlohmann::json::parse(std::string(bytes.begin(), bytes.end()));
  EXPECT_EQ(j.at("method"), "dreambooth");
  EXPECT_EQ(j.at("dreambooth").at("learning_rate"), 1e-6);
  EXPECT_EQ(j.at("dreambooth").at("epochs"), 2000);
  EXPECT_EQ(j.at("dreambooth").at("class_images_per_class"), 50);
  EXPECT_EQ(j.at("designs")[0].at("subject_word"), "road-circle0");
  EXPECT_FALSE(fs::exists(dir / "out" / "prompts"));
}

TEST(Recipe, TextualInversionWritesPromptFiles) {
  const auto dir = toy::scratch_dir("recipe-ti");
  fs::create_directories(dir / "in");
  write_file_atomic(dir / "in" / "p1.png", "x");
  write_file_atomic(dir / "in" / "p2.png", "x");
  const auto r = emit_finetune_recipe({{"choker", dir / "in"}}, FinetuneMethod::TextualInversion, dir / "out");
  const auto bytes = read_file(dir / "out" / "recipe.json");
  const auto j = nlohmann::json::parse(std::string(bytes.begin(), bytes.end()));
  EXPECT_EQ(j.at("textual_inversion").at("tokens_per_word"), 8);
  EXPECT_EQ(j.at("textual_inversion").at("embedding_learning_rate"), 0.005);
  const auto txt = read_file(dir / "out" / "prompts" / "choker" / "p2.txt");
  EXPECT_EQ(std::string(txt.begin(), txt.end()), find_prompt("choker").full_prompt() + "\n");
}

TEST(Recipe, EmptyOrMissingInstanceDir) {
  const auto dir = toy::scratch_dir("recipe-empty");
  fs::create_directories(dir / "empty");
  write_file_atomic(dir / "empty" / "readme.md", "no images");
  EXPECT_EQ(code_of([&] { emit_finetune_recipe({{"choker", dir / "empty"}}, FinetuneMethod::DreamBooth); }),
            ErrorCode::EmptyInstanceSet);
  EXPECT_EQ(code_of([&] { emit_finetune_recipe({{"choker", dir / "nope"}}, FinetuneMethod::DreamBooth); }),
            ErrorCode::EmptyInstanceSet);
  fs::create_directories(dir / "ok");
  write_file_atomic(dir / "ok" / "a.png", "x");
  EXPECT_EQ(code_of([&] { emit_finetune_recipe({{"speed_bump", dir / "ok"}}, FinetuneMethod::DreamBooth); }),
            ErrorCode::NotFound);
}

TEST(Request, DefaultsAndBounds) {
  const InpaintRequest d;
  EXPECT_EQ(d.cfg_scale, 12.0);
  EXPECT_EQ(d.denoise_strength, 0.70);
  EXPECT_EQ(d.n_candidates, 1);

  auto r = request_for(square(8, 0, 0, 2));
  r.cfg_scale = 31;
  std::string msg;
  EXPECT_EQ(code_of([&] { r.validate(); }, &msg), ErrorCode::InvalidArgument);
  EXPECT_NE(msg.find("[0,30]"), std::string::npos) << msg;
  r.cfg_scale = -0.5;
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::InvalidArgument);
  r.cfg_scale = 30;
  EXPECT_NO_THROW(r.validate());
  r.denoise_strength = 1.01;
  EXPECT_EQ(code_of([&] { r.validate(); }, &msg), ErrorCode::InvalidArgument);
  EXPECT_NE(msg.find("[0,1]"), std::string::npos);
  r.denoise_strength = 0.7;
  r.n_candidates = 0;
  EXPECT_EQ(code_of([&] { r.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Request, WarnsOutsidePhotorealisticRanges) {
  auto r = request_for(square(8, 0, 0, 2));
  EXPECT_TRUE(r.warnings().empty());
  r.cfg_scale = 7;
  r.denoise_strength = 0.65;
  EXPECT_TRUE(r.warnings().empty());
  r.cfg_scale = 20;
  EXPECT_EQ(r.warnings().size(), 1u);
  r.denoise_strength = 0.9;
  EXPECT_EQ(r.warnings().size(), 2u);
  const auto res = inpaint::inpaint(noisy(8, 1), r, *make_backend("mock"));
  EXPECT_EQ(res.warnings.size(), 2u);
}

TEST(Request, JsonExpandsDesignName) {
  const auto r = request_from_json({{"design_name", "roundabout"}, {"seed", 9}});
  EXPECT_EQ(r.prompt, find_prompt("roundabout").full_prompt());
  EXPECT_EQ(r.seed, 9);
  EXPECT_EQ(r.cfg_scale, 12.0);
  EXPECT_EQ(code_of([] { request_from_json({{"cfg_scale", "high"}}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { request_from_json(nlohmann::json::array()); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { request_from_json({{"design_name", "moat"}}); }), ErrorCode::NotFound);
}

TEST(Mock, EmptyMaskReturnsInput) {
  const Image img = noisy(32, 3);
  auto r = request_for(maskkit::BinaryMask({32, 32}));
  r.n_candidates = 3;
  const auto res = inpaint::inpaint(img, r, *make_backend("mock"));
  ASSERT_EQ(res.candidates.size(), 3u);
  for (const auto& c : res.candidates) EXPECT_EQ(c.image, img);
  EXPECT_EQ(res.backend, "mock");
}

TEST(Mock, SameSeedSameBytes) {
  const Image img = noisy(48, 5);
  auto r = request_for(square(48, 10, 10, 20), 77);
  r.n_candidates = 2;
  MockBackend backend;
  const auto a = inpaint::inpaint(img, r, backend);
  const auto b = inpaint::inpaint(img, r, backend);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(encode_png(a.candidates[k].image), encode_png(b.candidates[k].image));
    EXPECT_EQ(a.candidates[k].seed, 77 + static_cast<std::int64_t>(k));
  }
  EXPECT_NE(a.candidates[0].image, a.candidates[1].image);
  r.seed = 78;
  EXPECT_NE(inpaint::inpaint(img, r, backend).candidates[0].image, a.candidates[0].image);
}

TEST(Mock, SquareFillMatchesPixelOracle) {
  // Uniform surroundings make the fill base exactly the background color.
  const Rgb bg{100, 150, 200}, patch{10, 20, 30};
  const int size = 64, x0 = 22, y0 = 17, side = 20;
  const Image img = two_tone(size, bg, patch, x0, y0, side);
  const auto mask = square(size, x0, y0, side);
  const std::int64_t seed = 1234;
  const auto res = inpaint::inpaint(img, request_for(mask, seed), *make_backend("mock"));
  const Image& out = res.candidates.at(0).image;
  expect_outside_identical(out, img, mask);

  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  std::size_t mismatches = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int noise = static_cast<int>(rng() % 25) - 12;
      if (!mask.at(x, y)) continue;
      // Distance to the nearest unmasked pixel inside an axis-aligned square.
      const int d = std::min({x - x0 + 1, x0 + side - x, y - y0 + 1, y0 + side - y});
      const double w = std::min(1.0, d / 3.0);
      auto expect = [&](std::uint8_t base, std::uint8_t orig) {
        const double fill = std::clamp(base + noise, 0, 255);
        return static_cast<std::uint8_t>(std::lround(w * fill + (1 - w) * orig));
      };
      const Rgb want{expect(bg.r, patch.r), expect(bg.g, patch.g), expect(bg.b, patch.b)};
      mismatches += !(out.at(x, y) == want);
    }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Mock, UnmaskedPixelsPreservedOnRandomMasks) {
  std::mt19937_64 rng(6);
  MockBackend backend;
  for (int trial = 0; trial < 25; ++trial) {
    const Image img = noisy(40, rng());
    maskkit::BinaryMask m({40, 40});
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) m.set(x, y, rng() % 3 == 0);
    auto r = request_for(m, static_cast<std::int64_t>(rng() % 1000));
    r.n_candidates = 2;
    for (const auto& c : inpaint::inpaint(img, r, backend).candidates) expect_outside_identical(c.image, img, m);
  }
}

TEST(Inpaint, GeometryMismatchAndValidation) {
  auto r = request_for(square(16, 0, 0, 4));
  EXPECT_EQ(code_of([&] { inpaint::inpaint(noisy(20, 1), r, *make_backend("mock")); }), ErrorCode::GeometryMismatch);
  r.cfg_scale = 31;
  EXPECT_EQ(code_of([&] { inpaint::inpaint(noisy(16, 1), r, *make_backend("mock")); }), ErrorCode::InvalidArgument);
}

TEST(Backends, Factory) {
  EXPECT_EQ(make_backend("mock")->name(), "mock");
  EXPECT_EQ(make_backend("http", "http://127.0.0.1:9")->name(), "http:http://127.0.0.1:9");
  EXPECT_EQ(code_of([] { make_backend("gpu"); }), ErrorCode::BackendUnavailable);
  unsetenv("INPAINT_BACKEND_URL");
  EXPECT_EQ(code_of([] { make_backend("http"); }), ErrorCode::BackendUnavailable);
  setenv("INPAINT_BACKEND_URL", "http://127.0.0.1:9", 1);
  EXPECT_EQ(make_backend("http")->name(), "http:http://127.0.0.1:9");
  unsetenv("INPAINT_BACKEND_URL");
}

namespace {

// Answers /inpaint with every pixel painted magenta; records the last body.
struct StubDiffusion {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  nlohmann::json last;
  int status = 200;
  int delay_ms = 0;

  StubDiffusion() {
    server.Post("/inpaint", [this](const httplib::Request& req, httplib::Response& res) {
      if (delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      last = nlohmann::json::parse(req.body);
      if (status != 200) {
        res.status = status;
        return;
      }
      const Image in = decode_image(base64_decode(last.at("image").get<std::string>()));
      Image out(in.width(), in.height());
      for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) out.set(x, y, {255, 0, 255});
      nlohmann::json images = nlohmann::json::array();
      for (int k = 0; k < last.at("n").get<int>(); ++k) images.push_back(base64_encode(encode_png(out)));
      res.set_content(nlohmann::json{{"images", images}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubDiffusion() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST(Http, SendsSchemaAndCompositesOriginalBack) {
  StubDiffusion stub;
  const Image img = noisy(24, 8);
  const auto mask = square(24, 4, 4, 6);
  auto r = request_for(mask, 31);
  r.n_candidates = 2;
  r.sampler_name = "DPM++ 2M";
  HttpBackend backend(stub.url());
  const auto res = inpaint::inpaint(img, r, backend);
  ASSERT_EQ(res.candidates.size(), 2u);
  for (const auto& c : res.candidates) {
    expect_outside_identical(c.image, img, mask);
    EXPECT_EQ(c.image.at(5, 5), (Rgb{255, 0, 255}));
  }
  EXPECT_EQ(stub.last.at("prompt"), r.prompt);
  EXPECT_EQ(stub.last.at("cfg_scale"), 12.0);
  EXPECT_EQ(stub.last.at("denoise_strength"), 0.70);
  EXPECT_EQ(stub.last.at("seed"), 31);
  EXPECT_EQ(stub.last.at("sampler"), "DPM++ 2M");
  EXPECT_EQ(stub.last.at("n"), 2);
  const auto gray = decode_gray_png(base64_decode(stub.last.at("mask").get<std::string>()));
  EXPECT_EQ(gray.values[static_cast<std::size_t>(5) * 24 + 5], 255);  // repaint = white
  EXPECT_EQ(gray.values[0], 0);
}

TEST(Http, ErrorStatusUnreachableAndTimeout) {
  StubDiffusion stub;
  const Image img = noisy(16, 2);
  const auto r = request_for(square(16, 2, 2, 4));
  stub.status = 503;
  HttpBackend backend(stub.url());
  EXPECT_EQ(code_of([&] { inpaint::inpaint(img, r, backend); }), ErrorCode::BackendUnavailable);
  stub.status = 200;
  stub.delay_ms = 1500;
  HttpBackend impatient(stub.url(), std::chrono::milliseconds(200));
  EXPECT_EQ(code_of([&] { inpaint::inpaint(img, r, impatient); }), ErrorCode::BackendTimeout);
  HttpBackend nowhere("http://127.0.0.1:1");
  EXPECT_EQ(code_of([&] { inpaint::inpaint(img, r, nowhere); }), ErrorCode::BackendUnavailable);
}
