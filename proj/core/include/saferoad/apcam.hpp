#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/classifier.hpp"
#include "saferoad/image.hpp"
#include "saferoad/maskkit.hpp"

namespace saferoad::apcam {

enum class CamMethod { GradCam, GradCamPlusPlus, ScoreCam };
std::string method_name(CamMethod m);
// Accepts gradcam | gradcampp | scorecam. Throws InvalidArgument.
CamMethod method_from_name(const std::string& name);

// Per-pixel values in [0,1], row-major.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct CamRequest {
  CamMethod method = CamMethod::GradCam;
  int target_class = classifier::kHotspot;
  std::string layer;  // empty: model.default_cam_layer()
};

nlohmann::json to_json(const CamRequest& r);
CamRequest cam_request_from_json(const nlohmann::json& j);

struct CamResult {
  Heatmap heatmap;
  std::string layer;
  nn::Shape activation_shape;
  std::vector<double> channel_weights;
  // Weighted channel sum before rectification, at activation resolution.
  std::vector<double> raw_map;
};

// Heatmap at the image's own resolution. Throws LayerNotFound,
// NonFiniteGradient.
Heatmap compute_cam(const classifier::ClassifierModel& model, const Image& image, const CamRequest& request);

// Works on an already preprocessed input; the heatmap has the input's size.
CamResult compute_cam_detailed(const classifier::ClassifierModel& model, const nn::Tensor& input,
                               const CamRequest& request);
CamResult compute_cam_detailed(const classifier::ClassifierModel& model, const Image& image,
                               const CamRequest& request);

// Clips negatives, then scales so the maximum is 1 (unchanged if max is 0).
void normalize(Heatmap& h);

// Bilinear resampling with half-pixel centers (edge clamped).
std::vector<double> resize_bilinear(const std::vector<double>& src, int src_w, int src_h, int dst_w, int dst_h);

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr double kDefaultMinAreaFraction = 0.001;

// TRUE where value >= threshold, then drops 8-connected components smaller
// than min_area (default: 0.1% of the pixels).
maskkit::BinaryMask threshold_to_mask(const Heatmap& h, double threshold = kDefaultThreshold,
                                      std::optional<std::size_t> min_area = std::nullopt);

Gray8 to_gray(const Heatmap& h);
Heatmap from_gray(const Gray8& g);

struct HeatmapSidecar {
  std::string method;
  std::string layer;
  std::optional<double> threshold;
  std::string colormap = kOverlayColormap;
};

nlohmann::json to_json(const HeatmapSidecar& s);

// Writes `<path>` (8-bit grayscale PNG) and `<path>.json`.
void save_heatmap(const std::filesystem::path& path, const Heatmap& h, const HeatmapSidecar& sidecar);

// Heatmap colorized with the fixed colormap and alpha-blended over the image.
Image overlay(const Image& image, const Heatmap& h, double alpha = 0.5);

}  // namespace saferoad::apcam
