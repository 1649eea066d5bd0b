#include "saferoad/maskkit.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saferoad/error.hpp"

namespace saferoad::maskkit {

namespace {

void require_same(const BinaryMask& a, const BinaryMask& b) {
  if (a.geometry() != b.geometry()) {
    throw Error(ErrorCode::DimensionMismatch,
                "mask geometry " + std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
  require_same(a, b);
  std::vector<std::uint8_t> out(a.pixel_count());
  const auto ab = a.bits(), bb = b.bits();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(ab[i] != 0, bb[i] != 0) ? 1 : 0;
  return BinaryMask(a.geometry(), std::move(out));
}

}  // namespace

BinaryMask::BinaryMask(Geometry g, bool fill) : geom_(g) {
  if (g.width < 0 || g.height < 0) throw Error(ErrorCode::InvalidArgument, "negative mask size");
  bits_.assign(static_cast<std::size_t>(g.width) * g.height, fill ? 1 : 0);
}

BinaryMask::BinaryMask(Geometry g, std::vector<std::uint8_t> bits) : geom_(g), bits_(std::move(bits)) {
  if (bits_.size() != static_cast<std::size_t>(g.width) * g.height) {
    throw Error(ErrorCode::DimensionMismatch, "mask bit count does not match geometry");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}

BinaryMask mask_union(std::span<const BinaryMask> masks) {
  if (masks.empty()) throw Error(ErrorCode::InvalidArgument, "union of zero masks");
  BinaryMask out = masks.front();
  for (std::size_t i = 1; i < masks.size(); ++i) out = mask_union(out, masks[i]);
  return out;
}

BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}

BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && !y; });
}

BinaryMask mask_complement(const BinaryMask& a) {
  std::vector<std::uint8_t> out(a.bits().begin(), a.bits().end());
  for (auto& v : out) v = v ? 0 : 1;
  return BinaryMask(a.geometry(), std::move(out));
}

std::size_t mask_area(const BinaryMask& m) { return m.area(); }

std::vector<float> distance_to(const BinaryMask& m) {
  const std::size_t n = m.pixel_count();
  if (m.empty()) return std::vector<float>(n, std::numeric_limits<float>::infinity());
  // distanceTransform measures the distance to the nearest zero pixel, so
  // feed it the complement.
  cv::Mat src(m.height(), m.width(), CV_8UC1);
  const auto bits = m.bits();
  for (std::size_t i = 0; i < n; ++i) src.data[i] = bits[i] ? 0 : 255;
  cv::Mat dist;
  cv::distanceTransform(src, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);
  std::vector<float> out(n);
  for (int y = 0; y < m.height(); ++y) {
    const float* row = dist.ptr<float>(y);
    std::copy(row, row + m.width(), out.begin() + static_cast<std::ptrdiff_t>(y) * m.width());
  }
  return out;
}

BinaryMask dilate(const BinaryMask& m, double radius) {
  const auto dist = distance_to(m);
  std::vector<std::uint8_t> out(dist.size());
  // Small slack absorbs float rounding in the distance transform.
  for (std::size_t i = 0; i < dist.size(); ++i) out[i] = dist[i] <= radius + 1e-4 ? 1 : 0;
  return BinaryMask(m.geometry(), std::move(out));
}

BinaryMask remove_small_components(const BinaryMask& m, std::size_t min_area) {
  if (min_area <= 1 || m.empty()) return m;
  const int w = m.width(), h = m.height();
  std::vector<int> comp(m.pixel_count(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  const auto bits = m.bits();
  for (std::size_t start = 0; start < bits.size(); ++start) {
    if (!bits[start] || comp[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    stack.push_back(start);
    comp[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int qx = px + dx, qy = py + dy;
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
          if (bits[q] && comp[q] < 0) {
            comp[q] = id;
            stack.push_back(q);
          }
        }
    }
    sizes.push_back(size);
  }
  std::vector<std::uint8_t> out(bits.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (comp[i] >= 0 && sizes[static_cast<std::size_t>(comp[i])] >= min_area) out[i] = 1;
  }
  return BinaryMask(m.geometry(), std::move(out));
}

// ---- scribbles -------------------------------------------------------------

namespace {

// Whether (px, py) lies within `radius` of segment a-b, compared on squared
// quantities so integer inputs are decided exactly.
bool within_segment(double px, double py, Point a, Point b, double r2) {
  const double abx = b.x - a.x, aby = b.y - a.y;
  const double apx = px - a.x, apy = py - a.y;
  const double len2 = abx * abx + aby * aby;
  const double dot = apx * abx + apy * aby;
  if (len2 == 0.0 || dot <= 0.0) return apx * apx + apy * apy <= r2;
  if (dot >= len2) {
    const double bpx = px - b.x, bpy = py - b.y;
    return bpx * bpx + bpy * bpy <= r2;
  }
  const double cross = apx * aby - apy * abx;
  return cross * cross <= r2 * len2;
}

Point clamp_point(Point p, Geometry g) {
  return {std::clamp(p.x, 0.0, static_cast<double>(std::max(g.width - 1, 0))),
          std::clamp(p.y, 0.0, static_cast<double>(std::max(g.height - 1, 0)))};
}

}  // namespace

BinaryMask rasterize_scribbles(const ScribbleSet& scribbles, Geometry geometry) {
  BinaryMask mask(geometry);
  for (const auto& stroke : scribbles.strokes) {
    if (!(stroke.radius >= 1.0)) throw Error(ErrorCode::InvalidArgument, "stroke radius must be >= 1");
    if (stroke.points.empty()) throw Error(ErrorCode::InvalidArgument, "stroke has no points");
    const bool value = stroke.mode == StrokeMode::Paint;
    const double r2 = stroke.radius * stroke.radius;
    std::vector<Point> pts;
    pts.reserve(stroke.points.size());
    for (const auto& p : stroke.points) pts.push_back(clamp_point(p, geometry));
    const std::size_t segs = pts.size() == 1 ? 1 : pts.size() - 1;
    for (std::size_t s = 0; s < segs; ++s) {
      const Point a = pts[s];
      const Point b = pts.size() == 1 ? pts[s] : pts[s + 1];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - stroke.radius)));
      const int x1 = std::min(geometry.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + stroke.radius)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - stroke.radius)));
      const int y1 = std::min(geometry.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + stroke.radius)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (within_segment(x, y, a, b, r2)) mask.set(x, y, value);
        }
    }
  }
  return mask;
}

ScribbleSet scribbles_from_json(const nlohmann::json& j) {
  ScribbleSet s;
  const auto& strokes = j.is_array() ? j : j.at("strokes");
  for (const auto& sj : strokes) {
    Stroke st;
    st.radius = sj.at("radius").get<double>();
    const std::string mode = sj.value("mode", "paint");
    if (mode == "paint") {
      st.mode = StrokeMode::Paint;
    } else if (mode == "erase") {
      st.mode = StrokeMode::Erase;
    } else {
      throw Error(ErrorCode::InvalidArgument, "stroke mode must be paint or erase");
    }
    for (const auto& pj : sj.at("points")) {
      if (pj.is_array()) {
        st.points.push_back({pj.at(0).get<double>(), pj.at(1).get<double>()});
      } else {
        st.points.push_back({pj.at("x").get<double>(), pj.at("y").get<double>()});
      }
    }
    s.strokes.push_back(std::move(st));
  }
  return s;
}

nlohmann::json to_json(const ScribbleSet& s) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& st : s.strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : st.points) pts.push_back({p.x, p.y});
    strokes.push_back({{"points", pts},
                       {"radius", st.radius},
                       {"mode", st.mode == StrokeMode::Paint ? "paint" : "erase"}});
  }
  return {{"strokes", strokes}};
}

// ---- composition -----------------------------------------------------------

BinaryMask compose_saliency_mask(const BinaryMask& ap_mask, const SegmentMaskSet& segments,
                                 const std::optional<BinaryMask>& road_marking_mask) {
  BinaryMask out = ap_mask;
  for (const char* name : {kTrafficSign, kTrafficSignal}) {
    if (const auto it = segments.find(name); it != segments.end()) out = mask_union(out, it->second);
  }
  if (road_marking_mask) out = mask_union(out, *road_marking_mask);
  return out;
}

// ---- serialization ---------------------------------------------------------

std::string polarity_name(Polarity p) { return p == Polarity::TrueIsWhite ? "true_is_white" : "true_is_black"; }

Polarity polarity_from_name(const std::string& name) {
  if (name == "true_is_white") return Polarity::TrueIsWhite;
  if (name == "true_is_black") return Polarity::TrueIsBlack;
  throw Error(ErrorCode::InvalidArgument, "unknown polarity " + name);
}

std::string source_name(MaskSource s) {
  switch (s) {
    case MaskSource::Cam: return "cam";
    case MaskSource::Scribble: return "scribble";
    case MaskSource::Segmentation: return "segmentation";
    case MaskSource::Composed: return "composed";
    case MaskSource::Fixture: return "fixture";
  }
  return "scribble";
}

MaskSource source_from_name(const std::string& name) {
  for (auto s : {MaskSource::Cam, MaskSource::Scribble, MaskSource::Segmentation, MaskSource::Composed,
                 MaskSource::Fixture}) {
    if (source_name(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown mask source " + name);
}

nlohmann::json to_json(const MaskSidecar& s) {
  return {{"polarity", polarity_name(s.polarity)},
          {"source", source_name(s.source)},
          {"parent_ids", s.parent_ids},
          {"extra", s.extra}};
}

MaskSidecar sidecar_from_json(const nlohmann::json& j) {
  MaskSidecar s;
  s.polarity = polarity_from_name(j.value("polarity", "true_is_white"));
  s.source = source_from_name(j.value("source", "scribble"));
  if (j.contains("parent_ids")) s.parent_ids = j.at("parent_ids").get<std::vector<std::string>>();
  if (j.contains("extra")) s.extra = j.at("extra");
  return s;
}

Bytes encode_mask_png(const BinaryMask& m, Polarity polarity) {
  Gray8 g{m.width(), m.height(), std::vector<std::uint8_t>(m.pixel_count())};
  const std::uint8_t on = polarity == Polarity::TrueIsWhite ? 255 : 0;
  const std::uint8_t off = 255 - on;
  const auto bits = m.bits();
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = bits[i] ? on : off;
  return encode_gray_png(g);
}

BinaryMask decode_mask_png(std::span<const std::uint8_t> png, Polarity polarity) {
  Gray8 g;
  try {
    g = decode_gray_png(png);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidMask, e.what());
  }
  const std::uint8_t on = polarity == Polarity::TrueIsWhite ? 255 : 0;
  std::vector<std::uint8_t> bits(g.values.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const auto v = g.values[i];
    if (v != 0 && v != 255) {
      throw Error(ErrorCode::InvalidMask, "mask pixel value " + std::to_string(v) + " is neither 0 nor 255");
    }
    bits[i] = v == on ? 1 : 0;
  }
  return BinaryMask({g.width, g.height}, std::move(bits));
}

void save_mask(const std::filesystem::path& png_path, const BinaryMask& m, const MaskSidecar& sidecar) {
  write_file_atomic(png_path, encode_mask_png(m, sidecar.polarity));
  auto side = png_path;
  side += ".json";
  auto j = to_json(sidecar);
  j["width"] = m.width();
  j["height"] = m.height();
  write_file_atomic(side, j.dump(2));
}

BinaryMask load_mask(const std::filesystem::path& png_path) {
  auto side = png_path;
  side += ".json";
  Polarity polarity = Polarity::TrueIsWhite;
  if (std::filesystem::exists(side)) {
    const auto text = read_file(side);
    polarity = sidecar_from_json(nlohmann::json::parse(text.begin(), text.end())).polarity;
  }
  return decode_mask_png(read_file(png_path), polarity);
}

}  // namespace saferoad::maskkit
