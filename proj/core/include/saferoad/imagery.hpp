#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/geo.hpp"
#include "saferoad/util.hpp"

namespace saferoad::imagery {

struct CapturePlan {
  LatLon location;
  // Sweep order, clockwise from the leftmost tile.
  std::vector<double> headings;
  double per_image_fov = 80.0;
  double pitch = 0.0;
};

// Tiles total_fov with ceil(total_fov / per_image_fov) views spaced
// per_image_fov apart and centered on base_heading. Requires
// 0 < per_image_fov <= total_fov <= 360.
CapturePlan plan_captures(LatLon location, double total_fov, double per_image_fov, double base_heading,
                          double pitch = 0.0);

enum class Label { Unlabeled, Hotspot, NonHotspot };
std::string label_name(Label l);
Label label_from_name(const std::string& name);

enum class ImageSource { Provider, Fixture };

enum class Split { None, Train, Test };
std::string split_name(Split s);

// Identifies one view; also the cache key.
struct CaptureKey {
  LatLon location;
  double heading = 0.0;
  double fov = 80.0;
  double pitch = 0.0;

  std::string str() const;
};

// Canonical location key used for label maps ("lat,lon" at 1e-6 degrees).
std::string location_key(LatLon p);

class ImageRecord {
 public:
  std::string image_id;
  LatLon location;
  double heading = 0.0;
  double fov = 80.0;
  double pitch = 0.0;
  std::string file_path;  // relative to the workspace root
  std::string content_hash;
  ImageSource source = ImageSource::Provider;
  Split split = Split::None;

  Label label() const noexcept { return label_; }
  // A label, once set, cannot change. Throws InvalidArgument.
  void assign_label(Label l);

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;

 private:
  Label label_ = Label::Unlabeled;
};

nlohmann::json to_json(const ImageRecord& r);
ImageRecord record_from_json(const nlohmann::json& j);

struct ProviderConfig {
  std::string endpoint = "https://maps.googleapis.com/maps/api/streetview";
  std::string api_key;  // defaults to $IMAGERY_API_KEY
  std::string size = "640x640";
  bool fixture_mode = false;
  std::filesystem::path fixture_dir;
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{500};
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
  int max_concurrent = 4;
};

// Fetches views into a content-verified cache under `<root>/<cache_subdir>`.
// Cached files are never rewritten; a hash mismatch on read is
// CacheCorrupted. Thread-safe; concurrent fetches are capped at
// ProviderConfig::max_concurrent.
class ImageFetcher {
 public:
  ImageFetcher(std::filesystem::path root, ProviderConfig config,
               std::filesystem::path cache_subdir = "imagery/cache");

  // Throws ProviderQuotaExceeded, NoImageryAtLocation, NetworkFailure,
  // FixtureMissing, CacheCorrupted.
  ImageRecord fetch(const CaptureKey& key);
  std::vector<ImageRecord> fetch_plan(const CapturePlan& plan);

  // Number of requests sent to the provider so far.
  std::size_t request_count() const noexcept { return requests_.load(); }

  std::filesystem::path absolute(const std::string& relative) const { return root_ / relative; }

 private:
  Bytes download(const CaptureKey& key);
  std::optional<ImageRecord> cached(const CaptureKey& key) const;

  std::filesystem::path root_;
  std::filesystem::path cache_subdir_;
  ProviderConfig config_;
  std::atomic<std::size_t> requests_{0};
  std::counting_semaphore<64> slots_;
  std::mutex write_mutex_;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.3;

  std::vector<const ImageRecord*> split(Split s) const;
  const ImageRecord* find(const std::string& image_id) const;
};

// Labels each record from its location and assigns a stratified train/test
// split. The test count is round(test_fraction * n) overall, shared between
// labels by largest remainder (ties go to hotspot). Throws UnlabeledRecord.
DatasetManifest build_manifest(std::vector<ImageRecord> records, const std::map<std::string, Label>& labels,
                               std::uint64_t split_seed, double test_fraction);

// Per-label test counts for the rule above.
std::map<Label, std::size_t> stratified_test_counts(const std::map<Label, std::size_t>& class_sizes,
                                                    double test_fraction);

// `<stem>.header.json` + `<stem>.jsonl`.
void save_manifest(const std::filesystem::path& stem, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& stem);
std::string manifest_hash(const DatasetManifest& m);

}  // namespace saferoad::imagery
