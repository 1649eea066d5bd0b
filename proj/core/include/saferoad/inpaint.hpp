#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/image.hpp"
#include "saferoad/maskkit.hpp"

namespace saferoad::inpaint {

struct PromptSpec {
  std::string design_name;
  std::string subject_word;
  std::string class_prompt;

  // Class prompt with the subject word inserted after "photo of".
  std::string full_prompt() const;
};

// The seven road designs and their fine-tuning subject words.
const std::vector<PromptSpec>& prompt_catalog();
// Throws NotFound.
const PromptSpec& find_prompt(const std::string& design_name);

nlohmann::json to_json(const PromptSpec& p);

// ---- fine-tuning recipes ---------------------------------------------------

enum class FinetuneMethod { DreamBooth, TextualInversion };
std::string method_name(FinetuneMethod m);
FinetuneMethod finetune_method_from_name(const std::string& name);

struct DreamBoothParams {
  int epochs = 2000;
  double learning_rate = 1e-6;
  int class_images_per_class = 50;
};

struct TextualInversionParams {
  int epochs = 2000;
  double embedding_learning_rate = 0.005;
  int tokens_per_word = 8;
};

struct DesignInstances {
  std::string design_name;
  std::filesystem::path instance_dir;
};

struct RecipeEntry {
  PromptSpec prompt;
  std::vector<std::filesystem::path> instance_images;
};

struct FinetuneRecipe {
  FinetuneMethod method = FinetuneMethod::DreamBooth;
  std::vector<RecipeEntry> designs;
  DreamBoothParams dreambooth;
  TextualInversionParams textual_inversion;
};

nlohmann::json to_json(const FinetuneRecipe& r);

// Collects instance images (jpg/jpeg/png, sorted) per design. When `out_dir`
// is given, writes `recipe.json` there, plus one prompt .txt per instance
// image under `prompts/<design>/` for textual inversion. Throws
// EmptyInstanceSet, NotFound.
FinetuneRecipe emit_finetune_recipe(const std::vector<DesignInstances>& designs, FinetuneMethod method,
                                    const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// ---- inpainting ------------------------------------------------------------

inline constexpr double kCfgMin = 0.0, kCfgMax = 30.0;
inline constexpr double kCfgBestMin = 7.0, kCfgBestMax = 18.0;
inline constexpr double kDenoiseBestMin = 0.65, kDenoiseBestMax = 0.75;

struct InpaintRequest {
  std::string image_id;
  maskkit::BinaryMask mask;  // TRUE = repaint
  std::string prompt;
  std::string design_name;   // optional catalog reference
  double cfg_scale = 12.0;
  double denoise_strength = 0.70;
  std::int64_t seed = 0;
  std::string sampler_name = "Euler a";
  int n_candidates = 1;

  // Throws InvalidArgument naming the violated bound.
  void validate() const;
  // Legal values outside the photorealistic ranges.
  std::vector<std::string> warnings() const;
};

// Request parameters only (the mask travels separately). A design name
// without a prompt expands to the catalog's full prompt.
nlohmann::json to_json(const InpaintRequest& r);
InpaintRequest request_from_json(const nlohmann::json& j);

struct Candidate {
  Image image;
  std::int64_t seed = 0;
};

struct InpaintResult {
  std::vector<Candidate> candidates;
  std::string backend;
  nlohmann::json request;
  std::vector<std::string> warnings;
};

class InpaintBackend {
 public:
  virtual ~InpaintBackend() = default;
  virtual std::string name() const = 0;
  // One image per candidate, same geometry as `image`. Need not preserve
  // unmasked pixels; inpaint() composites them back.
  virtual std::vector<Image> generate(const Image& image, const InpaintRequest& request) = 0;
};

// Seeded noise texture around the mean color of the mask's surroundings,
// feathered over 3 pixels inside the mask edge.
class MockBackend final : public InpaintBackend {
 public:
  std::string name() const override { return "mock"; }
  std::vector<Image> generate(const Image& image, const InpaintRequest& request) override;
};

// POSTs {image, mask, prompt, cfg_scale, denoise_strength, seed, sampler, n}
// to `<url>/inpaint`; images and the mask (white = repaint) are base64 PNG.
// Expects {"images": [base64 PNG, ...]}.
class HttpBackend final : public InpaintBackend {
 public:
  explicit HttpBackend(std::string url, std::chrono::milliseconds timeout = std::chrono::minutes(5))
      : url_(std::move(url)), timeout_(timeout) {}
  std::string name() const override { return "http:" + url_; }
  std::vector<Image> generate(const Image& image, const InpaintRequest& request) override;

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
};

// kind "mock" or "http"; an empty url for http falls back to
// INPAINT_BACKEND_URL. Throws BackendUnavailable.
std::unique_ptr<InpaintBackend> make_backend(const std::string& kind, const std::string& url = {});

// Copies `original` wherever the mask is FALSE.
Image composite(const Image& original, const Image& generated, const maskkit::BinaryMask& mask);

// Throws GeometryMismatch, InvalidArgument, BackendUnavailable, BackendTimeout.
InpaintResult inpaint(const Image& image, const InpaintRequest& request, InpaintBackend& backend);

}  // namespace saferoad::inpaint
