#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "saferoad/image.hpp"
#include "saferoad/maskkit.hpp"

namespace saferoad::maskkit {

// Source of per-class segmentation masks (object segmentation, road
// markings). Implementations never fabricate empty masks for missing classes.
class SegmentAdapter {
 public:
  virtual ~SegmentAdapter() = default;
  // Throws AdapterUnavailable or GeometryMismatch.
  virtual SegmentMaskSet load(const std::string& image_id, const Image& image) = 0;
};

// Reads `<root>/<image_id>/<class>.png` mask files (TRUE = white).
class FixtureSegmentAdapter final : public SegmentAdapter {
 public:
  explicit FixtureSegmentAdapter(std::filesystem::path root) : root_(std::move(root)) {}
  SegmentMaskSet load(const std::string& image_id, const Image& image) override;

 private:
  std::filesystem::path root_;
};

// POSTs {"image_id", "image": base64 PNG} to `<endpoint>/segment` and expects
// {"classes": {"<name>": base64 PNG mask, ...}} back.
class HttpSegmentAdapter final : public SegmentAdapter {
 public:
  HttpSegmentAdapter(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : endpoint_(std::move(endpoint)), timeout_(timeout) {}
  SegmentMaskSet load(const std::string& image_id, const Image& image) override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

struct SegmentAdapterConfig {
  std::string kind = "fixture";  // fixture | http
  std::filesystem::path fixture_dir;
  std::string endpoint;
};

std::unique_ptr<SegmentAdapter> make_segment_adapter(const SegmentAdapterConfig& config);

SegmentMaskSet load_segment_masks(const std::string& image_id, const Image& image, SegmentAdapter& adapter);

}  // namespace saferoad::maskkit
