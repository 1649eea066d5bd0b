#include "saferoad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "saferoad/error.hpp"
#include "saferoad/events.hpp"
#include "saferoad/hotspot.hpp"
#include "saferoad/util.hpp"

namespace saferoad::synth {

maskkit::BinaryMask ToyImage::disk_mask(double extra_radius) const {
  maskkit::BinaryMask m(maskkit::Geometry{image.width(), image.height()});
  if (radius == 0) return m;
  const double r = radius + extra_radius;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const double dx = x - cx, dy = y - cy;
      m.set(x, y, dx * dx + dy * dy <= r * r);
    }
  return m;
}

ToyImage make_toy_image(int label, std::mt19937_64& rng, int size, bool distractors) {
  auto uni = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ToyImage t;
  t.label = label;
  const int base = uni(70, 150);
  const Rgb tint{static_cast<std::uint8_t>(base + uni(-10, 10)), static_cast<std::uint8_t>(base + uni(-10, 10)),
                 static_cast<std::uint8_t>(base + uni(-10, 10))};
  t.image = Image(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      auto n = [&](std::uint8_t c) { return static_cast<std::uint8_t>(std::clamp(c + uni(-20, 20), 0, 255)); };
      t.image.set(x, y, {n(tint.r), n(tint.g), n(tint.b)});
    }

  Rgb color;
  if (label == classifier::kHotspot) {
    color = {static_cast<std::uint8_t>(uni(200, 255)), static_cast<std::uint8_t>(uni(0, 50)),
             static_cast<std::uint8_t>(uni(0, 50))};
  } else {
    if (!distractors) return t;
    const int kind = uni(0, 3);
    if (kind < 2) return t;
    color = kind == 2 ? Rgb{static_cast<std::uint8_t>(uni(0, 50)), static_cast<std::uint8_t>(uni(0, 50)),
                            static_cast<std::uint8_t>(uni(200, 255))}
                      : Rgb{static_cast<std::uint8_t>(uni(0, 50)), static_cast<std::uint8_t>(uni(160, 220)),
                            static_cast<std::uint8_t>(uni(0, 50))};
  }
  t.radius = std::max(3, size * uni(10, 14) / 64);
  t.cx = uni(t.radius + 1, size - t.radius - 2);
  t.cy = uni(t.radius + 1, size - t.radius - 2);
  for (int y = t.y0(); y <= t.y1(); ++y)
    for (int x = t.x0(); x <= t.x1(); ++x) {
      const int dx = x - t.cx, dy = y - t.cy;
      if (dx * dx + dy * dy <= t.radius * t.radius) t.image.set(x, y, color);
    }
  return t;
}

std::vector<ToyImage> make_toy_dataset(std::size_t n, std::uint64_t seed, int size, bool distractors) {
  std::mt19937_64 rng(seed);
  std::vector<ToyImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_toy_image(i % 2 == 0 ? classifier::kHotspot : classifier::kNonHotspot, rng, size, distractors));
  }
  return out;
}

std::vector<classifier::LabeledSample> to_samples(const classifier::ClassifierModel& model,
                                                  const std::vector<ToyImage>& images) {
  std::vector<classifier::LabeledSample> out;
  out.reserve(images.size());
  for (const auto& t : images) out.push_back({model.preprocess(t.image), t.label});
  return out;
}

DemoCorpus write_demo_corpus(const std::filesystem::path& dir, std::size_t hotspots, std::uint64_t seed,
                             const WorkspaceConfig& config, int image_size) {
  if (hotspots == 0) throw Error(ErrorCode::InvalidArgument, "need at least one hotspot");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat_u(40.60, 40.70), lon_u(-74.05, -73.92), jitter(-0.00012, 0.00012);

  std::vector<LatLon> centers;
  while (centers.size() < hotspots) {
    const LatLon c{lat_u(rng), lon_u(rng)};
    bool far = true;
    for (const auto& o : centers) far = far && haversine_meters(c, o) > 1500.0;
    if (far) centers.push_back(c);
  }
  std::string csv = "CRASH DATE,CRASH TIME,LATITUDE,LONGITUDE,COLLISION_ID\n";
  int next_id = 1;
  auto row = [&](LatLon p) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "01/%02d/2022,%d:%02d,%.7f,%.7f,%d\n", 1 + next_id % 28, next_id % 24,
                  next_id % 60, p.lat, p.lon, 4000000 + next_id);
    csv += buf;
    ++next_id;
  };
  const int per_cluster = std::max(8, config.cluster.min_samples + 3);
  for (const auto& c : centers) {
    for (int k = 0; k < per_cluster; ++k) row({c.lat + jitter(rng), c.lon + jitter(rng)});
  }
  for (std::size_t k = 0; k < 2 * hotspots;) {
    const LatLon p{lat_u(rng), lon_u(rng)};
    bool far = true;
    for (const auto& o : centers) far = far && haversine_meters(p, o) > 600.0;
    if (!far) continue;
    row(p);
    ++k;
  }

  std::filesystem::create_directories(dir / "fixtures");
  DemoCorpus out{dir / "events.csv", dir / "fixtures", hotspots, 0};
  write_file_atomic(out.events_csv, csv);

  const auto parsed = events::parse_events(csv);
  const auto labels = hotspot::dbscan(parsed.events, config.cluster);
  const auto clusters = hotspot::cluster_centers(parsed.events, labels);
  const auto views = plan_dataset(parsed.events, clusters, config);
  for (const auto& v : views) {
    const auto key = v.key.str();
    std::mt19937_64 view_rng(std::hash<std::string>{}(key) ^ seed);
    const int label = v.label == imagery::Label::Hotspot ? classifier::kHotspot : classifier::kNonHotspot;
    write_png(out.fixture_dir / (key + ".png"), make_toy_image(label, view_rng, image_size).image);
  }
  out.views = views.size();
  return out;
}

}  // namespace saferoad::synth
