#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "saferoad/util.hpp"

namespace saferoad {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit interleaved RGB image, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    const std::size_t i = index(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return 3 * (static_cast<std::size_t>(y) * width_ + x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Single-channel 8-bit raster (heatmap exports, mask files).
struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;
};

// Decodes JPEG/PNG/etc. Throws UndecodableImage.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

Bytes encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

Bytes encode_gray_png(const Gray8& gray);
// Requires a single-channel 8-bit PNG; anything else is UndecodableImage.
Gray8 decode_gray_png(std::span<const std::uint8_t> bytes);

Image resize_bilinear(const Image& image, int width, int height);

// Maps [0,1] values to an RGB colormap ("jet") for visual overlays.
Image colorize(const Gray8& gray);
inline constexpr const char* kOverlayColormap = "jet";

}  // namespace saferoad
