#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/apcam.hpp"
#include "saferoad/classifier.hpp"
#include "saferoad/image.hpp"
#include "saferoad/maskkit.hpp"

namespace saferoad::saliency {

enum class SaliencySource { ExternalModel, BuiltinBaseline, Fixture };
std::string source_name(SaliencySource s);

struct SalientRegion {
  maskkit::BinaryMask mask;
  SaliencySource source = SaliencySource::BuiltinBaseline;
};

struct BackendConfig {
  std::string kind = "builtin";  // builtin | fixture | http
  // fixture: `<fixture_dir>/<image_id>.png`, white = salient.
  std::filesystem::path fixture_dir;
  // http: POST `<endpoint>/saliency`; empty falls back to SALIENCY_BACKEND_URL.
  std::string endpoint;
  std::chrono::milliseconds timeout = std::chrono::seconds(60);
  // Continuous maps are binarized at mean + k * stddev.
  double k_std = 1.0;
};

nlohmann::json to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const nlohmann::json& j);

// Spectral residual saliency, normalized to [0,1], at the image's size.
std::vector<double> spectral_residual(const Image& image);

// TRUE where value >= mean + k * stddev; empty when the map is flat.
maskkit::BinaryMask binarize(std::span<const double> values, maskkit::Geometry g, double k_std);

// Throws AdapterUnavailable, GeometryMismatch.
SalientRegion salient_region(const Image& image, const BackendConfig& config, const std::string& image_id = {});

// 100 * |salient ∩ ap| / |ap|. Throws EmptyApMask, DimensionMismatch.
double ap_saliency_ratio(const maskkit::BinaryMask& salient, const maskkit::BinaryMask& ap_mask);

struct SaliencyReport {
  std::map<std::string, double> per_image;  // percent
  std::optional<double> average;            // mean of per_image, in key order
  std::vector<std::string> excluded;        // empty AP masks
};

nlohmann::json to_json(const SaliencyReport& r);
std::string report_csv(const SaliencyReport& r);

struct SaliencyItem {
  std::string image_id;
  Image image;
  maskkit::BinaryMask ap_mask;
};

SaliencyReport batch_saliency_report(std::span<const SaliencyItem> items, const BackendConfig& backend);

struct CamMaskConfig {
  apcam::CamRequest request;
  double threshold = apcam::kDefaultThreshold;
  std::optional<std::size_t> min_area;
};

// AP masks come from thresholded CAM heatmaps of `model`.
SaliencyReport batch_saliency_report(const classifier::ClassifierModel& model,
                                     std::span<const std::pair<std::string, Image>> images, const CamMaskConfig& cam,
                                     const BackendConfig& backend);

// ---- chrominance alteration ------------------------------------------------

// Full-range BT.601 YCbCr:
//   Y  =       0.299    R + 0.587    G + 0.114    B
//   Cb = 128 - 0.168736 R - 0.331264 G + 0.5      B
//   Cr = 128 + 0.5      R - 0.418688 G - 0.081312 B
//   R = Y + 1.402 (Cr-128)
//   G = Y - 0.344136 (Cb-128) - 0.714136 (Cr-128)
//   B = Y + 1.772 (Cb-128)
// Hue is the angle of (Cb-128, Cr-128) in degrees, [0,360).
struct Ycc {
  double y = 0.0;
  double cb = 128.0;
  double cr = 128.0;
};
Ycc to_ycc(Rgb c);
// Rounded and clamped to 8 bits.
Rgb to_rgb(const Ycc& c);
double hue_degrees(const Ycc& c);

enum class HueMode { AutoContrast, Fixed };

struct ChromaParams {
  double strength = 1.0;  // [0,1]
  HueMode mode = HueMode::AutoContrast;
  double fixed_hue = 0.0;  // degrees; also the auto fallback for a gray ring
  int ring_radius = 15;
};

nlohmann::json to_json(const ChromaParams& p);
ChromaParams chroma_params_from_json(const nlohmann::json& j);

// Chroma-weighted circular mean hue of the pixels in `ring`; nullopt when the
// ring is empty or achromatic.
std::optional<double> mean_hue(const Image& image, const maskkit::BinaryMask& ring);

// Hue the region is pushed toward: the fixed hue, or the mean ring hue
// (dilation by ring_radius minus the region) plus 180 degrees.
double target_hue(const Image& image, const maskkit::BinaryMask& region, const ChromaParams& params);

// Inside `region`, keeps Y and moves (Cb,Cr) toward the in-gamut chroma of
// maximal saturation at the target hue, by `strength`. Pixels outside the
// region are copied. Throws GeometryMismatch, InvalidArgument.
Image chrominance_alter(const Image& image, const maskkit::BinaryMask& region, const ChromaParams& params);

}  // namespace saferoad::saliency
