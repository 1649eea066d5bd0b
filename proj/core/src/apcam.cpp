#include "saferoad/apcam.hpp"

#include <algorithm>
#include <cmath>

#include "saferoad/error.hpp"
#include "saferoad/util.hpp"

namespace saferoad::apcam {

std::string method_name(CamMethod m) {
  switch (m) {
    case CamMethod::GradCam: return "gradcam";
    case CamMethod::GradCamPlusPlus: return "gradcampp";
    case CamMethod::ScoreCam: return "scorecam";
  }
  return "gradcam";
}

CamMethod method_from_name(const std::string& name) {
  if (name == "gradcam") return CamMethod::GradCam;
  if (name == "gradcampp" || name == "gradcam++") return CamMethod::GradCamPlusPlus;
  if (name == "scorecam") return CamMethod::ScoreCam;
  throw Error(ErrorCode::InvalidArgument, "unknown CAM method: " + name);
}

nlohmann::json to_json(const CamRequest& r) {
  return {{"method", method_name(r.method)},
          {"target_class", r.target_class == classifier::kHotspot ? "hotspot" : "non_hotspot"},
          {"layer", r.layer}};
}

CamRequest cam_request_from_json(const nlohmann::json& j) {
  CamRequest r;
  if (j.contains("method")) r.method = method_from_name(j.at("method").get<std::string>());
  if (j.contains("target_class")) {
    const auto t = j.at("target_class").get<std::string>();
    if (t == "hotspot") r.target_class = classifier::kHotspot;
    else if (t == "non_hotspot") r.target_class = classifier::kNonHotspot;
    else throw Error(ErrorCode::InvalidArgument, "target_class must be hotspot or non_hotspot");
  }
  r.layer = j.value("layer", std::string{});
  return r;
}

std::vector<double> resize_bilinear(const std::vector<double>& src, int src_w, int src_h, int dst_w, int dst_h) {
  std::vector<double> out(static_cast<std::size_t>(dst_w) * dst_h);
  auto coord = [](int d, int src_n, int dst_n, int& i0, int& i1, double& f) {
    double s = (d + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, src_n - 1);
    f = s - i0;
  };
  for (int y = 0; y < dst_h; ++y) {
    int y0, y1;
    double fy;
    coord(y, src_h, dst_h, y0, y1, fy);
    for (int x = 0; x < dst_w; ++x) {
      int x0, x1;
      double fx;
      coord(x, src_w, dst_w, x0, x1, fx);
      auto v = [&](int xx, int yy) { return src[static_cast<std::size_t>(yy) * src_w + xx]; };
      const double top = v(x0, y0) * (1 - fx) + v(x1, y0) * fx;
      const double bot = v(x0, y1) * (1 - fx) + v(x1, y1) * fx;
      out[static_cast<std::size_t>(y) * dst_w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

void normalize(Heatmap& h) {
  double mx = 0.0;
  for (double& v : h.values) {
    if (v < 0.0) v = 0.0;
    mx = std::max(mx, v);
  }
  if (mx > 0.0) {
    for (double& v : h.values) v /= mx;
  }
}

namespace {

std::vector<double> plane(const nn::Tensor& t, int c) {
  const std::size_t n = static_cast<std::size_t>(t.height()) * t.width();
  const double* p = &t.at(c, 0, 0);
  return {p, p + n};
}

void check_finite(const nn::Tensor& t) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient at CAM layer");
}

std::vector<double> gradient_weights(const nn::Tensor& grad, const nn::Tensor& act, CamMethod method) {
  const nn::Shape s = grad.shape();
  const std::size_t n = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> w(static_cast<std::size_t>(s.c), 0.0);
  for (int c = 0; c < s.c; ++c) {
    const double* g = &grad.at(c, 0, 0);
    if (method == CamMethod::GradCam) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += g[i];
      w[static_cast<std::size_t>(c)] = sum / static_cast<double>(n);
      continue;
    }
    const double* a = &act.at(c, 0, 0);
    double sum_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum_a += a[i];
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (g[i] == 0.0) continue;
      const double g2 = g[i] * g[i];
      const double alpha = g2 / (2.0 * g2 + sum_a * g2 * g[i] + 1e-7);
      acc += alpha * std::max(g[i], 0.0);
    }
    w[static_cast<std::size_t>(c)] = acc;
  }
  return w;
}

std::vector<double> score_weights(const classifier::ClassifierModel& model, const nn::Tensor& input,
                                  const nn::Tensor& act, int target) {
  const nn::Shape in = input.shape();
  const nn::Shape s = act.shape();
  std::vector<double> scores(static_cast<std::size_t>(s.c), 0.0);
  nn::Tensor masked(in);
  for (int c = 0; c < s.c; ++c) {
    auto up = resize_bilinear(plane(act, c), s.w, s.h, in.w, in.h);
    const auto [lo, hi] = std::minmax_element(up.begin(), up.end());
    const double mn = *lo, range = *hi - *lo;
    for (double& v : up) v = range > 0.0 ? (v - mn) / range : 0.0;
    for (int ch = 0; ch < in.c; ++ch)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
          masked.at(ch, y, x) = input.at(ch, y, x) * up[static_cast<std::size_t>(y) * in.w + x];
    scores[static_cast<std::size_t>(c)] = model.probabilities(masked)[static_cast<std::size_t>(target)];
  }
  return nn::softmax(scores);
}

}  // namespace

CamResult compute_cam_detailed(const classifier::ClassifierModel& model, const nn::Tensor& input,
                               const CamRequest& request) {
  if (request.target_class < 0 || request.target_class >= model.spec().num_classes) {
    throw Error(ErrorCode::InvalidArgument, "target class out of range");
  }
  CamResult r;
  r.layer = request.layer.empty() ? model.default_cam_layer() : request.layer;
  const std::size_t node = model.node_index(r.layer);
  const auto stages = model.backbone_layers();
  if (r.layer != "abm" && std::find(stages.begin(), stages.end(), r.layer) == stages.end()) {
    throw Error(ErrorCode::LayerNotFound, "not a convolutional stage: " + r.layer);
  }

  const auto trace = model.forward_trace(input);
  const nn::Tensor& act = trace.outputs[node];
  if (act.dims().size() != 3) throw Error(ErrorCode::LayerNotFound, "layer has no spatial output: " + r.layer);
  r.activation_shape = act.shape();

  if (request.method == CamMethod::ScoreCam) {
    r.channel_weights = score_weights(model, input, act, request.target_class);
  } else {
    std::vector<double> onehot(static_cast<std::size_t>(model.spec().num_classes), 0.0);
    onehot[static_cast<std::size_t>(request.target_class)] = 1.0;
    const auto grads = model.backward(trace, onehot);
    check_finite(grads.outputs[node]);
    r.channel_weights = gradient_weights(grads.outputs[node], act, request.method);
  }

  const nn::Shape s = r.activation_shape;
  const std::size_t n = static_cast<std::size_t>(s.h) * s.w;
  r.raw_map.assign(n, 0.0);
  for (int c = 0; c < s.c; ++c) {
    const double w = r.channel_weights[static_cast<std::size_t>(c)];
    const double* a = &act.at(c, 0, 0);
    for (std::size_t i = 0; i < n; ++i) r.raw_map[i] += w * a[i];
  }
  std::vector<double> rect(r.raw_map);
  for (double& v : rect) v = std::max(v, 0.0);

  const nn::Shape in = input.shape();
  r.heatmap.width = in.w;
  r.heatmap.height = in.h;
  r.heatmap.values = resize_bilinear(rect, s.w, s.h, in.w, in.h);
  normalize(r.heatmap);
  return r;
}

CamResult compute_cam_detailed(const classifier::ClassifierModel& model, const Image& image,
                               const CamRequest& request) {
  CamResult r = compute_cam_detailed(model, model.preprocess(image), request);
  std::vector<double> rect(r.raw_map);
  for (double& v : rect) v = std::max(v, 0.0);
  r.heatmap.width = image.width();
  r.heatmap.height = image.height();
  r.heatmap.values =
      resize_bilinear(rect, r.activation_shape.w, r.activation_shape.h, image.width(), image.height());
  normalize(r.heatmap);
  return r;
}

Heatmap compute_cam(const classifier::ClassifierModel& model, const Image& image, const CamRequest& request) {
  return compute_cam_detailed(model, image, request).heatmap;
}

maskkit::BinaryMask threshold_to_mask(const Heatmap& h, double threshold, std::optional<std::size_t> min_area) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0,1)");
  }
  maskkit::BinaryMask m(maskkit::Geometry{h.width, h.height});
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) m.set(x, y, h.at(x, y) >= threshold);
  const std::size_t area = min_area.value_or(static_cast<std::size_t>(
      std::ceil(kDefaultMinAreaFraction * static_cast<double>(h.values.size()))));
  return maskkit::remove_small_components(m, area);
}

Gray8 to_gray(const Heatmap& h) {
  Gray8 g{h.width, h.height, std::vector<std::uint8_t>(h.values.size())};
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    g.values[i] = static_cast<std::uint8_t>(std::lround(std::clamp(h.values[i], 0.0, 1.0) * 255.0));
  }
  return g;
}

Heatmap from_gray(const Gray8& g) {
  Heatmap h{g.width, g.height, std::vector<double>(g.values.size())};
  for (std::size_t i = 0; i < g.values.size(); ++i) h.values[i] = g.values[i] / 255.0;
  return h;
}

nlohmann::json to_json(const HeatmapSidecar& s) {
  nlohmann::json j = {{"method", s.method}, {"layer", s.layer}, {"colormap", s.colormap}};
  j["threshold"] = s.threshold ? nlohmann::json(*s.threshold) : nlohmann::json(nullptr);
  return j;
}

void save_heatmap(const std::filesystem::path& path, const Heatmap& h, const HeatmapSidecar& sidecar) {
  write_file_atomic(path, encode_gray_png(to_gray(h)));
  auto side = path;
  side += ".json";
  write_file_atomic(side, to_json(sidecar).dump(2));
}

Image overlay(const Image& image, const Heatmap& h, double alpha) {
  if (h.width != image.width() || h.height != image.height()) {
    throw Error(ErrorCode::GeometryMismatch, "heatmap and image sizes differ");
  }
  const Image color = colorize(to_gray(h));
  Image out(image.width(), image.height());
  auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
  };
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const Rgb a = image.at(x, y), b = color.at(x, y);
      out.set(x, y, {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)});
    }
  return out;
}

}  // namespace saferoad::apcam
