#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/image.hpp"

namespace saferoad::maskkit {

struct Geometry {
  int width = 0;
  int height = 0;
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

// Per-pixel boolean raster. TRUE marks the region designated for change or
// attention; exporters translate to other polarities.
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Geometry g, bool fill = false);
  BinaryMask(Geometry g, std::vector<std::uint8_t> bits);

  Geometry geometry() const noexcept { return geom_; }
  int width() const noexcept { return geom_.width; }
  int height() const noexcept { return geom_.height; }
  std::size_t pixel_count() const noexcept { return bits_.size(); }

  bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) noexcept { bits_[index(x, y)] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < geom_.width && y < geom_.height;
  }

  // 0/1 per pixel, row-major.
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::size_t area() const noexcept;
  bool empty() const noexcept { return area() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * geom_.width + x;
  }

  Geometry geom_;
  std::vector<std::uint8_t> bits_;
};

// Throws DimensionMismatch on differing geometry.
BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_union(std::span<const BinaryMask> masks);
BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_complement(const BinaryMask& a);
BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b);
std::size_t mask_area(const BinaryMask& m);

// Euclidean dilation: TRUE where the nearest TRUE pixel of `m` is within
// `radius` pixels.
BinaryMask dilate(const BinaryMask& m, double radius);

// Euclidean distance from every pixel to the nearest TRUE pixel of `m`
// (+infinity everywhere when `m` is empty).
std::vector<float> distance_to(const BinaryMask& m);

// Drops 8-connected components smaller than min_area pixels.
BinaryMask remove_small_components(const BinaryMask& m, std::size_t min_area);

// ---- scribbles -------------------------------------------------------------

enum class StrokeMode { Paint, Erase };

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Stroke {
  std::vector<Point> points;
  double radius = 1.0;
  StrokeMode mode = StrokeMode::Paint;
};

struct ScribbleSet {
  std::vector<Stroke> strokes;
};

// Applies strokes in order. A pixel (x, y), taken at its integer center, is
// covered when its distance to the clamped polyline is <= radius. Throws
// InvalidArgument for radius < 1 or an empty stroke.
BinaryMask rasterize_scribbles(const ScribbleSet& scribbles, Geometry geometry);

ScribbleSet scribbles_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScribbleSet& s);

// ---- segmentation and composition -----------------------------------------

// class name -> mask, all sharing one geometry.
using SegmentMaskSet = std::map<std::string, BinaryMask>;

inline constexpr const char* kTrafficSign = "traffic_sign";
inline constexpr const char* kTrafficSignal = "traffic_signal";

// Union of the AP mask, the traffic sign and signal segments and the road
// marking mask. Missing components contribute nothing.
BinaryMask compose_saliency_mask(const BinaryMask& ap_mask, const SegmentMaskSet& segments,
                                 const std::optional<BinaryMask>& road_marking_mask);

// ---- serialization ---------------------------------------------------------

enum class Polarity {
  TrueIsWhite,  // TRUE -> 255 (inpainting backends)
  TrueIsBlack,  // TRUE -> 0 (keep-mask convention: zero at undesirable parts)
};

std::string polarity_name(Polarity p);
Polarity polarity_from_name(const std::string& name);

enum class MaskSource { Cam, Scribble, Segmentation, Composed, Fixture };

std::string source_name(MaskSource s);
MaskSource source_from_name(const std::string& name);

struct MaskSidecar {
  Polarity polarity = Polarity::TrueIsWhite;
  MaskSource source = MaskSource::Scribble;
  std::vector<std::string> parent_ids;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const MaskSidecar& s);
MaskSidecar sidecar_from_json(const nlohmann::json& j);

// 8-bit grayscale PNG holding only 0 and 255.
Bytes encode_mask_png(const BinaryMask& m, Polarity polarity = Polarity::TrueIsWhite);
// Throws InvalidMask if any pixel is neither 0 nor 255.
BinaryMask decode_mask_png(std::span<const std::uint8_t> png, Polarity polarity = Polarity::TrueIsWhite);

// Writes `<path>` and `<path>.json`.
void save_mask(const std::filesystem::path& png_path, const BinaryMask& m, const MaskSidecar& sidecar);
// Reads the sidecar (if present) to pick the polarity.
BinaryMask load_mask(const std::filesystem::path& png_path);

}  // namespace saferoad::maskkit
