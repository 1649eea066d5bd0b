#include "saferoad/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>

#include "http_client.hpp"
#include "saferoad/error.hpp"
#include "saferoad/util.hpp"

namespace saferoad::inpaint {

namespace {
constexpr std::string_view kPhotoOf = "photo of";
}

std::string PromptSpec::full_prompt() const {
  if (class_prompt.rfind(kPhotoOf, 0) != 0) return subject_word + " " + class_prompt;
  return std::string(kPhotoOf) + " " + subject_word + class_prompt.substr(kPhotoOf.size());
}

const std::vector<PromptSpec>& prompt_catalog() {
  // The published chicane prompt starts with "hoto of"; stored corrected.
  static const std::vector<PromptSpec> catalog = {
      {"chicane", "road-chicane0",
       "photo of S-shaped curve in the vehicle driving path, created by offset curb extensions in straight road"},
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
  return catalog;
}

const PromptSpec& find_prompt(const std::string& design_name) {
  for (const auto& p : prompt_catalog()) {
    if (p.design_name == design_name) return p;
  }
  throw Error(ErrorCode::NotFound, "unknown design: " + design_name);
}

nlohmann::json to_json(const PromptSpec& p) {
  return {{"design_name", p.design_name},
          {"subject_word", p.subject_word},
          {"class_prompt", p.class_prompt},
          {"full_prompt", p.full_prompt()}};
}

// ---- recipes ---------------------------------------------------------------

std::string method_name(FinetuneMethod m) {
  return m == FinetuneMethod::DreamBooth ? "dreambooth" : "textual_inversion";
}

FinetuneMethod finetune_method_from_name(const std::string& name) {
  if (name == "dreambooth") return FinetuneMethod::DreamBooth;
  if (name == "textual_inversion") return FinetuneMethod::TextualInversion;
  throw Error(ErrorCode::InvalidArgument, "method must be dreambooth or textual_inversion");
}

nlohmann::json to_json(const FinetuneRecipe& r) {
  nlohmann::json designs = nlohmann::json::array();
  for (const auto& d : r.designs) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& p : d.instance_images) images.push_back(p.string());
    designs.push_back({{"design_name", d.prompt.design_name},
                       {"subject_word", d.prompt.subject_word},
                       {"class_prompt", d.prompt.class_prompt},
                       {"instance_prompt", d.prompt.full_prompt()},
                       {"instance_images", images}});
  }
  nlohmann::json j = {{"method", method_name(r.method)}, {"designs", designs}};
  if (r.method == FinetuneMethod::DreamBooth) {
    j["dreambooth"] = {{"epochs", r.dreambooth.epochs},
                       {"learning_rate", r.dreambooth.learning_rate},
                       {"class_images_per_class", r.dreambooth.class_images_per_class}};
  } else {
    j["textual_inversion"] = {{"epochs", r.textual_inversion.epochs},
                              {"embedding_learning_rate", r.textual_inversion.embedding_learning_rate},
                              {"tokens_per_word", r.textual_inversion.tokens_per_word}};
  }
  return j;
}

FinetuneRecipe emit_finetune_recipe(const std::vector<DesignInstances>& designs, FinetuneMethod method,
                                    const std::optional<std::filesystem::path>& out_dir) {
  namespace fs = std::filesystem;
  FinetuneRecipe recipe;
  recipe.method = method;
  for (const auto& d : designs) {
    RecipeEntry e{find_prompt(d.design_name), {}};
    std::error_code ec;
    if (fs::is_directory(d.instance_dir, ec)) {
      for (const auto& f : fs::directory_iterator(d.instance_dir)) {
        auto ext = f.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (f.is_regular_file() && (ext == ".jpg" || ext == ".jpeg" || ext == ".png")) {
          e.instance_images.push_back(f.path());
        }
      }
    }
    if (e.instance_images.empty()) {
      throw Error(ErrorCode::EmptyInstanceSet, "no instance images for " + d.design_name);
    }
    std::sort(e.instance_images.begin(), e.instance_images.end());
    recipe.designs.push_back(std::move(e));
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_file_atomic(*out_dir / "recipe.json", to_json(recipe).dump(2));
    if (method == FinetuneMethod::TextualInversion) {
      for (const auto& e : recipe.designs) {
        const auto dir = *out_dir / "prompts" / e.prompt.design_name;
        fs::create_directories(dir);
        for (const auto& img : e.instance_images) {
          write_file_atomic(dir / (img.stem().string() + ".txt"), e.prompt.full_prompt() + "\n");
        }
      }
    }
  }
  return recipe;
}

// ---- requests --------------------------------------------------------------

void InpaintRequest::validate() const {
  if (!(cfg_scale >= kCfgMin && cfg_scale <= kCfgMax)) {
    throw Error(ErrorCode::InvalidArgument, "cfg_scale must lie in [0,30]");
  }
  if (!(denoise_strength >= 0.0 && denoise_strength <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "denoise_strength must lie in [0,1]");
  }
  if (n_candidates < 1) throw Error(ErrorCode::InvalidArgument, "n_candidates must be >= 1");
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "prompt must not be empty");
}

std::vector<std::string> InpaintRequest::warnings() const {
  std::vector<std::string> w;
  if (cfg_scale < kCfgBestMin || cfg_scale > kCfgBestMax) {
    w.push_back("cfg_scale " + format_fixed(cfg_scale, 2) + " outside the photorealistic range [7,18]");
  }
  if (denoise_strength < kDenoiseBestMin || denoise_strength > kDenoiseBestMax) {
    w.push_back("denoise_strength " + format_fixed(denoise_strength, 2) +
                " outside the photorealistic range [0.65,0.75]");
  }
  return w;
}

nlohmann::json to_json(const InpaintRequest& r) {
  return {{"image_id", r.image_id},
          {"prompt", r.prompt},
          {"design_name", r.design_name},
          {"cfg_scale", r.cfg_scale},
          {"denoise_strength", r.denoise_strength},
          {"seed", r.seed},
          {"sampler_name", r.sampler_name},
          {"n_candidates", r.n_candidates}};
}

InpaintRequest request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "inpaint request must be an object");
  InpaintRequest r;
  try {
    r.image_id = j.value("image_id", std::string{});
    r.design_name = j.value("design_name", std::string{});
    r.prompt = j.value("prompt", std::string{});
    if (r.prompt.empty() && !r.design_name.empty()) r.prompt = find_prompt(r.design_name).full_prompt();
    r.cfg_scale = j.value("cfg_scale", r.cfg_scale);
    r.denoise_strength = j.value("denoise_strength", r.denoise_strength);
    r.seed = j.value("seed", r.seed);
    r.sampler_name = j.value("sampler_name", r.sampler_name);
    r.n_candidates = j.value("n_candidates", r.n_candidates);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed inpaint request: ") + e.what());
  }
  return r;
}

// ---- backends --------------------------------------------------------------

std::vector<Image> MockBackend::generate(const Image& image, const InpaintRequest& request) {
  const auto& mask = request.mask;
  const maskkit::BinaryMask ring = maskkit::mask_difference(maskkit::dilate(mask, 15.0), mask);
  double sum[3] = {0, 0, 0};
  std::size_t n = 0;
  const maskkit::BinaryMask& src = ring.empty() ? maskkit::mask_complement(mask) : ring;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      if (!src.at(x, y)) continue;
      const Rgb c = image.at(x, y);
      sum[0] += c.r;
      sum[1] += c.g;
      sum[2] += c.b;
      ++n;
    }
  const double base[3] = {n ? sum[0] / n : 128.0, n ? sum[1] / n : 128.0, n ? sum[2] / n : 128.0};
  const auto inside = maskkit::distance_to(maskkit::mask_complement(mask));

  std::vector<Image> out;
  for (int k = 0; k < request.n_candidates; ++k) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(request.seed) + static_cast<std::uint64_t>(k));
    Image img = image;
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) {
        const auto noise = static_cast<int>(rng() % 25) - 12;
        if (!mask.at(x, y)) continue;
        const double w = std::min(1.0, inside[static_cast<std::size_t>(y) * image.width() + x] / 3.0);
        const Rgb o = image.at(x, y);
        const double orig[3] = {double(o.r), double(o.g), double(o.b)};
        std::uint8_t v[3];
        for (int ch = 0; ch < 3; ++ch) {
          const double fill = std::clamp(base[ch] + noise, 0.0, 255.0);
          v[ch] = static_cast<std::uint8_t>(std::lround(w * fill + (1.0 - w) * orig[ch]));
        }
        img.set(x, y, {v[0], v[1], v[2]});
      }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> HttpBackend::generate(const Image& image, const InpaintRequest& request) {
  const auto ep = detail::parse_endpoint(url_);
  auto cli = detail::make_client(ep, timeout_);
  const nlohmann::json body = {{"image", base64_encode(encode_png(image))},
                               {"mask", base64_encode(maskkit::encode_mask_png(request.mask))},
                               {"prompt", request.prompt},
                               {"cfg_scale", request.cfg_scale},
                               {"denoise_strength", request.denoise_strength},
                               {"seed", request.seed},
                               {"sampler", request.sampler_name},
                               {"n", request.n_candidates}};
  const auto res = cli->Post(ep.base_path + "/inpaint", body.dump(), "application/json");
  if (!res) {
    if (detail::is_timeout(res.error())) throw Error(ErrorCode::BackendTimeout, "inpainting backend timed out");
    throw Error(ErrorCode::BackendUnavailable, "inpainting backend unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::BackendUnavailable, "inpainting backend returned HTTP " + std::to_string(res->status));
  }
  std::vector<Image> out;
  try {
    const auto j = nlohmann::json::parse(res->body);
    for (const auto& b64 : j.at("images")) out.push_back(decode_image(base64_decode(b64.get<std::string>())));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("bad inpainting backend response: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("bad inpainting backend image: ") + e.what());
  }
  return out;
}

std::unique_ptr<InpaintBackend> make_backend(const std::string& kind, const std::string& url) {
  if (kind == "mock") return std::make_unique<MockBackend>();
  if (kind == "http") {
    std::string u = url;
    if (u.empty()) {
      if (const char* env = std::getenv("INPAINT_BACKEND_URL")) u = env;
    }
    if (u.empty()) throw Error(ErrorCode::BackendUnavailable, "INPAINT_BACKEND_URL is not set");
    return std::make_unique<HttpBackend>(u);
  }
  throw Error(ErrorCode::BackendUnavailable, "unknown inpainting backend: " + kind);
}

Image composite(const Image& original, const Image& generated, const maskkit::BinaryMask& mask) {
  Image out = original;
  for (int y = 0; y < original.height(); ++y)
    for (int x = 0; x < original.width(); ++x) {
      if (mask.at(x, y)) out.set(x, y, generated.at(x, y));
    }
  return out;
}

InpaintResult inpaint(const Image& image, const InpaintRequest& request, InpaintBackend& backend) {
  request.validate();
  if (request.mask.width() != image.width() || request.mask.height() != image.height()) {
    throw Error(ErrorCode::GeometryMismatch, "mask geometry differs from the image");
  }
  InpaintResult result;
  result.backend = backend.name();
  result.request = to_json(request);
  result.warnings = request.warnings();
  auto images = backend.generate(image, request);
  if (images.size() != static_cast<std::size_t>(request.n_candidates)) {
    throw Error(ErrorCode::BackendUnavailable, "backend returned the wrong number of candidates");
  }
  for (std::size_t k = 0; k < images.size(); ++k) {
    Image g = std::move(images[k]);
    if (g.width() != image.width() || g.height() != image.height()) g = resize_bilinear(g, image.width(), image.height());
    result.candidates.push_back({composite(image, g, request.mask), request.seed + static_cast<std::int64_t>(k)});
  }
  return result;
}

}  // namespace saferoad::inpaint
