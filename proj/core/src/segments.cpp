#include "saferoad/segments.hpp"

#include "http_client.hpp"
#include "saferoad/error.hpp"

namespace saferoad::maskkit {

namespace fs = std::filesystem;

namespace {

void check_geometry(const std::string& name, const BinaryMask& m, const Image& image) {
  if (m.width() != image.width() || m.height() != image.height()) {
    throw Error(ErrorCode::GeometryMismatch,
                "segment mask '" + name + "' is " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                    ", image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
}

}  // namespace

SegmentMaskSet FixtureSegmentAdapter::load(const std::string& image_id, const Image& image) {
  const fs::path dir = root_ / image_id;
  if (!fs::is_directory(root_)) throw Error(ErrorCode::AdapterUnavailable, "fixture root missing: " + root_.string());
  SegmentMaskSet out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string name = entry.path().stem().string();
    auto mask = decode_mask_png(read_file(entry.path()));
    check_geometry(name, mask, image);
    out.emplace(name, std::move(mask));
  }
  return out;
}

SegmentMaskSet HttpSegmentAdapter::load(const std::string& image_id, const Image& image) {
  const auto ep = detail::parse_endpoint(endpoint_);
  auto cli = detail::make_client(ep, timeout_);
  const nlohmann::json body{{"image_id", image_id}, {"image", base64_encode(encode_png(image))}};
  const auto res = cli->Post(ep.base_path + "/segment", body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::AdapterUnavailable, "segmentation service unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::AdapterUnavailable, "segmentation service returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::AdapterUnavailable, std::string("bad segmentation reply: ") + e.what());
  }
  SegmentMaskSet out;
  for (const auto& [name, png] : reply.at("classes").items()) {
    auto mask = decode_mask_png(base64_decode(png.get<std::string>()));
    check_geometry(name, mask, image);
    out.emplace(name, std::move(mask));
  }
  return out;
}

std::unique_ptr<SegmentAdapter> make_segment_adapter(const SegmentAdapterConfig& config) {
  if (config.kind == "fixture") return std::make_unique<FixtureSegmentAdapter>(config.fixture_dir);
  if (config.kind == "http") {
    if (config.endpoint.empty()) throw Error(ErrorCode::AdapterUnavailable, "segmentation endpoint not configured");
    return std::make_unique<HttpSegmentAdapter>(config.endpoint);
  }
  throw Error(ErrorCode::AdapterUnavailable, "unknown segmentation adapter " + config.kind);
}

SegmentMaskSet load_segment_masks(const std::string& image_id, const Image& image, SegmentAdapter& adapter) {
  return adapter.load(image_id, image);
}

}  // namespace saferoad::maskkit
