#include "saferoad/imagery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "http_client.hpp"
#include "saferoad/error.hpp"

namespace saferoad::imagery {

namespace fs = std::filesystem;

namespace {

double wrap_heading(double h) {
  double w = std::fmod(h, 360.0);
  if (w < 0) w += 360.0;
  // Snap values that round to 360 back to 0.
  if (w >= 360.0 - 1e-9) w = 0.0;
  return w;
}

}  // namespace

CapturePlan plan_captures(LatLon location, double total_fov, double per_image_fov, double base_heading,
                          double pitch) {
  if (!(per_image_fov > 0.0) || !(per_image_fov <= total_fov) || !(total_fov <= 360.0)) {
    throw Error(ErrorCode::InvalidArgument, "require 0 < per_image_fov <= total_fov <= 360");
  }
  CapturePlan plan;
  plan.location = location;
  plan.per_image_fov = per_image_fov;
  plan.pitch = pitch;
  // The epsilon keeps 240/80 from rounding up to 4 tiles.
  const int count = static_cast<int>(std::ceil(total_fov / per_image_fov - 1e-9));
  for (int i = 0; i < count; ++i) {
    const double offset = (i - (count - 1) / 2.0) * per_image_fov;
    plan.headings.push_back(wrap_heading(base_heading + offset));
  }
  return plan;
}

std::string label_name(Label l) {
  switch (l) {
    case Label::Hotspot: return "hotspot";
    case Label::NonHotspot: return "non_hotspot";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label label_from_name(const std::string& name) {
  if (name == "hotspot") return Label::Hotspot;
  if (name == "non_hotspot") return Label::NonHotspot;
  if (name == "unlabeled") return Label::Unlabeled;
  throw Error(ErrorCode::InvalidArgument, "unknown label " + name);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::None: return "none";
  }
  return "none";
}

namespace {

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return Split::None;
}

}  // namespace

std::string CaptureKey::str() const {
  std::ostringstream out;
  out << format_fixed(location.lat, 6) << '_' << format_fixed(location.lon, 6) << "_h" << format_fixed(heading, 2)
      << "_f" << format_fixed(fov, 2) << "_p" << format_fixed(pitch, 2);
  return out.str();
}

std::string location_key(LatLon p) { return format_fixed(p.lat, 6) + "," + format_fixed(p.lon, 6); }

void ImageRecord::assign_label(Label l) {
  if (label_ != Label::Unlabeled && label_ != l) {
    throw Error(ErrorCode::InvalidArgument, "label of " + image_id + " is already " + label_name(label_));
  }
  label_ = l;
}

nlohmann::json to_json(const ImageRecord& r) {
  return {{"image_id", r.image_id},
          {"location", {{"lat", r.location.lat}, {"lon", r.location.lon}}},
          {"heading", r.heading},
          {"fov", r.fov},
          {"pitch", r.pitch},
          {"label", label_name(r.label())},
          {"file_path", r.file_path},
          {"content_hash", r.content_hash},
          {"source", r.source == ImageSource::Fixture ? "fixture" : "provider"},
          {"split", split_name(r.split)}};
}

ImageRecord record_from_json(const nlohmann::json& j) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.location = {j.at("location").at("lat").get<double>(), j.at("location").at("lon").get<double>()};
  r.heading = j.value("heading", 0.0);
  r.fov = j.value("fov", 80.0);
  r.pitch = j.value("pitch", 0.0);
  r.assign_label(label_from_name(j.value("label", "unlabeled")));
  r.file_path = j.at("file_path").get<std::string>();
  r.content_hash = j.value("content_hash", "");
  r.source = j.value("source", "provider") == "fixture" ? ImageSource::Fixture : ImageSource::Provider;
  r.split = split_from_name(j.value("split", "none"));
  return r;
}

// ---- fetcher ---------------------------------------------------------------

ImageFetcher::ImageFetcher(fs::path root, ProviderConfig config, fs::path cache_subdir)
    : root_(std::move(root)),
      cache_subdir_(std::move(cache_subdir)),
      config_(std::move(config)),
      slots_(std::clamp(config_.max_concurrent, 1, 64)) {
  if (config_.api_key.empty()) {
    if (const char* env = std::getenv("IMAGERY_API_KEY")) config_.api_key = env;
  }
}

std::optional<ImageRecord> ImageFetcher::cached(const CaptureKey& key) const {
  const fs::path meta = root_ / cache_subdir_ / (key.str() + ".json");
  if (!fs::exists(meta)) return std::nullopt;
  const auto text = read_file(meta);
  ImageRecord rec = record_from_json(nlohmann::json::parse(text.begin(), text.end()));
  const auto bytes = read_file(root_ / rec.file_path);
  if (sha256_hex(bytes) != rec.content_hash) {
    throw Error(ErrorCode::CacheCorrupted, "cached image " + rec.file_path + " does not match its recorded hash");
  }
  return rec;
}

Bytes ImageFetcher::download(const CaptureKey& key) {
  if (config_.api_key.empty()) {
    throw Error(ErrorCode::InvalidArgument, "IMAGERY_API_KEY is not set and fixture mode is off");
  }
  const auto ep = detail::parse_endpoint(config_.endpoint);
  const httplib::Params params{{"size", config_.size},
                               {"location", format_fixed(key.location.lat, 6) + "," + format_fixed(key.location.lon, 6)},
                               {"heading", format_fixed(key.heading, 2)},
                               {"fov", format_fixed(key.fov, 2)},
                               {"pitch", format_fixed(key.pitch, 2)},
                               {"key", config_.api_key}};
  const std::string path = httplib::append_query_params(ep.base_path.empty() ? "/" : ep.base_path, params);

  for (int attempt = 0;; ++attempt) {
    ErrorCode code = ErrorCode::NetworkFailure;
    std::string why;
    {
      auto cli = detail::make_client(ep, config_.timeout);
      ++requests_;
      const auto res = cli->Get(path);
      if (!res) {
        why = "provider unreachable: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        return Bytes(res->body.begin(), res->body.end());
      } else if (res->status == 404) {
        throw Error(ErrorCode::NoImageryAtLocation, "no imagery for " + key.str());
      } else if (res->status == 429 || res->status == 403) {
        code = ErrorCode::ProviderQuotaExceeded;
        why = "provider refused request (HTTP " + std::to_string(res->status) + ")";
      } else {
        why = "provider returned HTTP " + std::to_string(res->status);
      }
    }
    if (attempt >= config_.max_retries) throw Error(code, why);
    std::this_thread::sleep_for(config_.retry_backoff * (1 << attempt));
  }
}

ImageRecord ImageFetcher::fetch(const CaptureKey& key) {
  if (auto hit = cached(key)) return *hit;

  slots_.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{slots_};

  Bytes bytes;
  ImageSource source = ImageSource::Provider;
  std::string ext = ".jpg";
  if (config_.fixture_mode) {
    source = ImageSource::Fixture;
    bool found = false;
    for (const char* candidate : {".jpg", ".jpeg", ".png"}) {
      const fs::path p = config_.fixture_dir / (key.str() + candidate);
      if (fs::exists(p)) {
        bytes = read_file(p);
        ext = candidate;
        found = true;
        break;
      }
    }
    if (!found) throw Error(ErrorCode::FixtureMissing, "no fixture image for " + key.str());
  } else {
    bytes = download(key);
  }

  ImageRecord rec;
  rec.image_id = "img_" + sha256_hex(key.str()).substr(0, 16);
  rec.location = key.location;
  rec.heading = key.heading;
  rec.fov = key.fov;
  rec.pitch = key.pitch;
  rec.file_path = (cache_subdir_ / (key.str() + ext)).generic_string();
  rec.content_hash = sha256_hex(bytes);
  rec.source = source;

  std::lock_guard lock(write_mutex_);
  if (auto hit = cached(key)) return *hit;
  const fs::path file = root_ / rec.file_path;
  if (!fs::exists(file)) write_file_atomic(file, bytes);
  write_file_atomic(root_ / cache_subdir_ / (key.str() + ".json"), to_json(rec).dump(2));
  return rec;
}

std::vector<ImageRecord> ImageFetcher::fetch_plan(const CapturePlan& plan) {
  std::vector<ImageRecord> out;
  out.reserve(plan.headings.size());
  for (const double h : plan.headings) out.push_back(fetch({plan.location, h, plan.per_image_fov, plan.pitch}));
  return out;
}

// ---- manifest --------------------------------------------------------------

std::vector<const ImageRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

const ImageRecord* DatasetManifest::find(const std::string& image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return &r;
  }
  return nullptr;
}

std::map<Label, std::size_t> stratified_test_counts(const std::map<Label, std::size_t>& class_sizes,
                                                    double test_fraction) {
  std::size_t total = 0;
  for (const auto& [label, n] : class_sizes) total += n;
  const auto target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(total)));
  std::map<Label, std::size_t> counts;
  std::vector<std::pair<double, Label>> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, n] : class_sizes) {
    const double exact = test_fraction * static_cast<double>(n);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    counts[label] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), label);
  }
  // Label enum order puts Hotspot before NonHotspot, which breaks ties.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned) {
    ++counts[remainders[i].second];
  }
  return counts;
}

DatasetManifest build_manifest(std::vector<ImageRecord> records, const std::map<std::string, Label>& labels,
                               std::uint64_t split_seed, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_fraction must be in (0,1)");
  }
  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const auto it = labels.find(location_key(r.location));
    if (it == labels.end() || it->second == Label::Unlabeled) {
      throw Error(ErrorCode::UnlabeledRecord, "no label for " + r.image_id + " at " + location_key(r.location));
    }
    r.assign_label(it->second);
    by_label[it->second].push_back(i);
  }
  {
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.image_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw Error(ErrorCode::InvalidArgument, "duplicate image_id in manifest");
    }
  }

  std::map<Label, std::size_t> sizes;
  for (const auto& [label, idx] : by_label) sizes[label] = idx.size();
  const auto test_counts = stratified_test_counts(sizes, test_fraction);

  std::mt19937_64 rng(split_seed);
  for (auto& [label, idx] : by_label) {
    // Sort first so the split does not depend on input order.
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return records[a].image_id < records[b].image_id; });
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    const std::size_t n_test = test_counts.at(label);
    for (std::size_t k = 0; k < idx.size(); ++k) records[idx[k]].split = k < n_test ? Split::Test : Split::Train;
  }
  return {std::move(records), split_seed, test_fraction};
}

namespace {

std::string records_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

}  // namespace

std::string manifest_hash(const DatasetManifest& m) { return sha256_hex(records_jsonl(m)); }

void save_manifest(const fs::path& stem, const DatasetManifest& m) {
  const std::string body = records_jsonl(m);
  const nlohmann::json header{{"version", 1},
                              {"split_seed", m.split_seed},
                              {"test_fraction", m.test_fraction},
                              {"record_count", m.records.size()},
                              {"records_sha256", sha256_hex(body)}};
  write_file_atomic(with_suffix(stem, ".jsonl"), body);
  write_file_atomic(with_suffix(stem, ".header.json"), header.dump(2));
}

DatasetManifest load_manifest(const fs::path& stem) {
  const auto header_bytes = read_file(with_suffix(stem, ".header.json"));
  const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  DatasetManifest m;
  m.split_seed = header.at("split_seed").get<std::uint64_t>();
  m.test_fraction = header.at("test_fraction").get<double>();
  std::ifstream in(with_suffix(stem, ".jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) m.records.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return m;
}

}  // namespace saferoad::imagery
