#include "saferoad/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "http_client.hpp"
#include "saferoad/error.hpp"
#include "saferoad/util.hpp"

namespace saferoad::saliency {

std::string source_name(SaliencySource s) {
  switch (s) {
    case SaliencySource::ExternalModel: return "external_model";
    case SaliencySource::BuiltinBaseline: return "builtin_baseline";
    case SaliencySource::Fixture: return "fixture";
  }
  return "builtin_baseline";
}

nlohmann::json to_json(const BackendConfig& c) {
  return {{"kind", c.kind},
          {"fixture_dir", c.fixture_dir.string()},
          {"endpoint", c.endpoint},
          {"timeout_ms", c.timeout.count()},
          {"k_std", c.k_std}};
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig c;
  c.kind = j.value("kind", c.kind);
  c.fixture_dir = j.value("fixture_dir", std::string{});
  c.endpoint = j.value("endpoint", std::string{});
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
  c.k_std = j.value("k_std", c.k_std);
  return c;
}

// ---- builtin baseline ------------------------------------------------------

std::vector<double> spectral_residual(const Image& image) {
  const int w = image.width(), h = image.height();
  cv::Mat gray(h, w, CV_64F);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = image.at(x, y);
      gray.at<double>(y, x) = (0.299 * c.r + 0.587 * c.g + 0.114 * c.b) / 255.0;
    }
  cv::Scalar mean, stddev;
  cv::meanStdDev(gray, mean, stddev);
  if (stddev[0] < 1e-9) return std::vector<double>(static_cast<std::size_t>(w) * h, 0.0);

  const int sw = 64;
  const int sh = std::max(1, static_cast<int>(std::lround(64.0 * h / w)));
  cv::Mat small;
  cv::resize(gray, small, cv::Size(sw, sh), 0, 0, cv::INTER_AREA);

  cv::Mat planes[] = {small, cv::Mat::zeros(small.size(), CV_64F)};
  cv::Mat spectrum;
  cv::merge(planes, 2, spectrum);
  cv::dft(spectrum, spectrum);
  cv::split(spectrum, planes);
  cv::Mat magnitude, phase;
  cv::cartToPolar(planes[0], planes[1], magnitude, phase);
  cv::Mat log_amp;
  cv::log(magnitude + 1e-12, log_amp);
  cv::Mat smooth;
  cv::blur(log_amp, smooth, cv::Size(3, 3), cv::Point(-1, -1), cv::BORDER_REPLICATE);
  cv::Mat residual_amp;
  cv::exp(log_amp - smooth, residual_amp);
  cv::polarToCart(residual_amp, phase, planes[0], planes[1]);
  cv::merge(planes, 2, spectrum);
  cv::idft(spectrum, spectrum, cv::DFT_SCALE);
  cv::split(spectrum, planes);
  cv::Mat sal;
  cv::magnitude(planes[0], planes[1], sal);
  sal = sal.mul(sal);
  cv::GaussianBlur(sal, sal, cv::Size(0, 0), 2.5, 2.5, cv::BORDER_REPLICATE);

  cv::Mat full;
  cv::resize(sal, full, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
  double mn, mx;
  cv::minMaxLoc(full, &mn, &mx);
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  if (mx - mn <= 0.0) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = (full.at<double>(y, x) - mn) / (mx - mn);
  return out;
}

maskkit::BinaryMask binarize(std::span<const double> values, maskkit::Geometry g, double k_std) {
  maskkit::BinaryMask m(g);
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size()));
  if (sd <= 1e-12) return m;
  const double cut = mean + k_std * sd;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) m.set(x, y, values[static_cast<std::size_t>(y) * g.width + x] >= cut);
  return m;
}

namespace {

SalientRegion from_fixture(const Image& image, const BackendConfig& config, const std::string& image_id) {
  std::error_code ec;
  if (config.fixture_dir.empty() || !std::filesystem::is_directory(config.fixture_dir, ec)) {
    throw Error(ErrorCode::AdapterUnavailable, "saliency fixture directory missing: " + config.fixture_dir.string());
  }
  const auto path = config.fixture_dir / (image_id + ".png");
  if (!std::filesystem::exists(path, ec)) {
    throw Error(ErrorCode::AdapterUnavailable, "no saliency fixture for " + image_id);
  }
  auto mask = maskkit::decode_mask_png(read_file(path));
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw Error(ErrorCode::GeometryMismatch, "saliency fixture size differs from the image: " + image_id);
  }
  return {std::move(mask), SaliencySource::Fixture};
}

SalientRegion from_http(const Image& image, const BackendConfig& config, const std::string& image_id) {
  std::string url = config.endpoint;
  if (url.empty()) {
    if (const char* env = std::getenv("SALIENCY_BACKEND_URL")) url = env;
  }
  if (url.empty()) throw Error(ErrorCode::AdapterUnavailable, "SALIENCY_BACKEND_URL is not set");
  const auto ep = detail::parse_endpoint(url);
  auto cli = detail::make_client(ep, config.timeout);
  const nlohmann::json body = {{"image_id", image_id}, {"image", base64_encode(encode_png(image))}};
  const auto res = cli->Post(ep.base_path + "/saliency", body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::AdapterUnavailable, "saliency service unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::AdapterUnavailable, "saliency service returned HTTP " + std::to_string(res->status));
  }
  const maskkit::Geometry g{image.width(), image.height()};
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (j.contains("mask")) {
      auto mask = maskkit::decode_mask_png(base64_decode(j.at("mask").get<std::string>()));
      if (mask.geometry() != g) throw Error(ErrorCode::GeometryMismatch, "saliency mask size differs from the image");
      return {std::move(mask), SaliencySource::ExternalModel};
    }
    const Gray8 map = decode_gray_png(base64_decode(j.at("saliency").get<std::string>()));
    if (map.width != g.width || map.height != g.height) {
      throw Error(ErrorCode::GeometryMismatch, "saliency map size differs from the image");
    }
    std::vector<double> v(map.values.begin(), map.values.end());
    return {binarize(v, g, config.k_std), SaliencySource::ExternalModel};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::AdapterUnavailable, std::string("bad saliency response: ") + e.what());
  }
}

}  // namespace

SalientRegion salient_region(const Image& image, const BackendConfig& config, const std::string& image_id) {
  if (config.kind == "builtin") {
    const auto map = spectral_residual(image);
    return {binarize(map, {image.width(), image.height()}, config.k_std), SaliencySource::BuiltinBaseline};
  }
  if (config.kind == "fixture") return from_fixture(image, config, image_id);
  if (config.kind == "http") return from_http(image, config, image_id);
  throw Error(ErrorCode::AdapterUnavailable, "unknown saliency backend: " + config.kind);
}

double ap_saliency_ratio(const maskkit::BinaryMask& salient, const maskkit::BinaryMask& ap_mask) {
  const std::size_t ap = ap_mask.area();
  if (ap == 0) throw Error(ErrorCode::EmptyApMask, "AP mask is empty");
  const std::size_t both = maskkit::mask_intersect(salient, ap_mask).area();
  return 100.0 * static_cast<double>(both) / static_cast<double>(ap);
}

// ---- reports ---------------------------------------------------------------

nlohmann::json to_json(const SaliencyReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [id, v] : r.per_image) per[id] = v;
  return {{"per_image", per},
          {"average", r.average ? nlohmann::json(*r.average) : nlohmann::json(nullptr)},
          {"contributing", r.per_image.size()},
          {"excluded", r.excluded}};
}

std::string report_csv(const SaliencyReport& r) {
  std::string out = "image_id,ratio_percent\n";
  for (const auto& [id, v] : r.per_image) out += id + "," + format_fixed(v, 6) + "\n";
  out += "average," + (r.average ? format_fixed(*r.average, 6) : std::string{}) + "\n";
  return out;
}

namespace {

void finish(SaliencyReport& r) {
  if (r.per_image.empty()) return;
  double sum = 0.0;
  for (const auto& [id, v] : r.per_image) sum += v;
  r.average = sum / static_cast<double>(r.per_image.size());
}

}  // namespace

SaliencyReport batch_saliency_report(std::span<const SaliencyItem> items, const BackendConfig& backend) {
  SaliencyReport r;
  for (const auto& item : items) {
    if (item.ap_mask.empty()) {
      r.excluded.push_back(item.image_id);
      continue;
    }
    const auto region = salient_region(item.image, backend, item.image_id);
    r.per_image[item.image_id] = ap_saliency_ratio(region.mask, item.ap_mask);
  }
  finish(r);
  return r;
}

SaliencyReport batch_saliency_report(const classifier::ClassifierModel& model,
                                     std::span<const std::pair<std::string, Image>> images, const CamMaskConfig& cam,
                                     const BackendConfig& backend) {
  std::vector<SaliencyItem> items;
  items.reserve(images.size());
  for (const auto& [id, image] : images) {
    const auto heat = apcam::compute_cam(model, image, cam.request);
    items.push_back({id, image, apcam::threshold_to_mask(heat, cam.threshold, cam.min_area)});
  }
  return batch_saliency_report(items, backend);
}

// ---- chrominance -----------------------------------------------------------

Ycc to_ycc(Rgb c) {
  const double r = c.r, g = c.g, b = c.b;
  return {0.299 * r + 0.587 * g + 0.114 * b, 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
          128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b};
}

Rgb to_rgb(const Ycc& c) {
  const double cb = c.cb - 128.0, cr = c.cr - 128.0;
  auto q = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
  return {q(c.y + 1.402 * cr), q(c.y - 0.344136 * cb - 0.714136 * cr), q(c.y + 1.772 * cb)};
}

double hue_degrees(const Ycc& c) {
  double h = std::atan2(c.cr - 128.0, c.cb - 128.0) * 180.0 / std::numbers::pi;
  if (h < 0.0) h += 360.0;
  return h;
}

nlohmann::json to_json(const ChromaParams& p) {
  return {{"strength", p.strength},
          {"target_hue_mode", p.mode == HueMode::AutoContrast ? "auto_contrast" : "fixed"},
          {"fixed_hue", p.fixed_hue},
          {"ring_radius", p.ring_radius}};
}

ChromaParams chroma_params_from_json(const nlohmann::json& j) {
  ChromaParams p;
  p.strength = j.value("strength", p.strength);
  const auto mode = j.value("target_hue_mode", std::string("auto_contrast"));
  if (mode == "auto_contrast") p.mode = HueMode::AutoContrast;
  else if (mode == "fixed") p.mode = HueMode::Fixed;
  else throw Error(ErrorCode::InvalidArgument, "target_hue_mode must be auto_contrast or fixed");
  p.fixed_hue = j.value("fixed_hue", p.fixed_hue);
  p.ring_radius = j.value("ring_radius", p.ring_radius);
  return p;
}

std::optional<double> mean_hue(const Image& image, const maskkit::BinaryMask& ring) {
  double u = 0.0, v = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      if (!ring.at(x, y)) continue;
      const Ycc c = to_ycc(image.at(x, y));
      u += c.cb - 128.0;
      v += c.cr - 128.0;
      ++n;
    }
  if (n == 0 || std::hypot(u, v) / static_cast<double>(n) < 1e-6) return std::nullopt;
  double h = std::atan2(v, u) * 180.0 / std::numbers::pi;
  if (h < 0.0) h += 360.0;
  return h;
}

double target_hue(const Image& image, const maskkit::BinaryMask& region, const ChromaParams& params) {
  if (params.mode == HueMode::Fixed) return std::fmod(std::fmod(params.fixed_hue, 360.0) + 360.0, 360.0);
  const auto ring = maskkit::mask_difference(maskkit::dilate(region, params.ring_radius), region);
  const auto h = mean_hue(image, ring);
  if (!h) return std::fmod(std::fmod(params.fixed_hue, 360.0) + 360.0, 360.0);
  return std::fmod(*h + 180.0, 360.0);
}

namespace {

// Largest chroma along (u,v) that keeps R, G and B inside [0,255] at luma y.
double max_chroma(double y, double u, double v) {
  const double coeff[3] = {1.402 * v, -0.344136 * u - 0.714136 * v, 1.772 * u};
  double c = 1e9;
  for (double a : coeff) {
    if (a > 1e-12) c = std::min(c, (255.0 - y) / a);
    else if (a < -1e-12) c = std::min(c, y / -a);
  }
  return std::max(0.0, c);
}

}  // namespace

Image chrominance_alter(const Image& image, const maskkit::BinaryMask& region, const ChromaParams& params) {
  if (region.width() != image.width() || region.height() != image.height()) {
    throw Error(ErrorCode::GeometryMismatch, "region geometry differs from the image");
  }
  if (!(params.strength >= 0.0 && params.strength <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "strength must lie in [0,1]");
  }
  if (params.strength == 0.0 || region.empty()) return image;

  const double hue = target_hue(image, region, params) * std::numbers::pi / 180.0;
  const double u = std::cos(hue), v = std::sin(hue);
  Image out = image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      if (!region.at(x, y)) continue;
      const Ycc c = to_ycc(image.at(x, y));
      // Margin keeps rounding away from the gamut edge, so clamping never
      // shifts luma.
      const double chroma = 0.95 * max_chroma(c.y, u, v);
      const double s = params.strength;
      const Ycc t{c.y, 128.0 + (1.0 - s) * (c.cb - 128.0) + s * chroma * u,
                  128.0 + (1.0 - s) * (c.cr - 128.0) + s * chroma * v};
      out.set(x, y, to_rgb(t));
    }
  return out;
}

}  // namespace saferoad::saliency
