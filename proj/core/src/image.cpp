#include "saferoad/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "saferoad/error.hpp"

namespace saferoad {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
  data_.resize(3 * static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

namespace {

Image from_bgr(const cv::Mat& bgr) {
  Image out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) out.set(x, y, {row[x][2], row[x][1], row[x][0]});
  }
  return out;
}

cv::Mat to_bgr(const Image& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const Rgb c = image.at(x, y);
      row[x] = cv::Vec3b(c.b, c.g, c.r);
    }
  }
  return bgr;
}

Bytes encode(const cv::Mat& mat) {
  std::vector<uchar> buf;
  // Fixed compression level keeps encoded bytes reproducible.
  if (!cv::imencode(".png", mat, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw Error(ErrorCode::IoError, "png encode failed");
  }
  return Bytes(buf.begin(), buf.end());
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::UndecodableImage, "empty image buffer");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::UndecodableImage, e.what());
  }
  if (bgr.empty()) throw Error(ErrorCode::UndecodableImage, "image could not be decoded");
  return from_bgr(bgr);
}

Image read_image(const std::filesystem::path& path) {
  Bytes bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::UndecodableImage, "cannot read image " + path.string());
  }
  return decode_image(bytes);
}

Bytes encode_png(const Image& image) { return encode(to_bgr(image)); }

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png(image));
}

Bytes encode_gray_png(const Gray8& gray) {
  if (gray.values.size() != static_cast<std::size_t>(gray.width) * gray.height) {
    throw Error(ErrorCode::DimensionMismatch, "gray raster size does not match its geometry");
  }
  const cv::Mat mat(gray.height, gray.width, CV_8UC1, const_cast<std::uint8_t*>(gray.values.data()));
  return encode(mat);
}

Gray8 decode_gray_png(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::UndecodableImage, "empty image buffer");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::UndecodableImage, e.what());
  }
  if (mat.empty()) throw Error(ErrorCode::UndecodableImage, "image could not be decoded");
  if (mat.type() != CV_8UC1) throw Error(ErrorCode::UndecodableImage, "expected 8-bit grayscale image");
  Gray8 out{mat.cols, mat.rows, {}};
  out.values.reserve(out.values.size());
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    out.values.insert(out.values.end(), row, row + mat.cols);
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (image.width() == width && image.height() == height) return image;
  cv::Mat out;
  cv::resize(to_bgr(image), out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_bgr(out);
}

Image colorize(const Gray8& gray) {
  const cv::Mat mat(gray.height, gray.width, CV_8UC1, const_cast<std::uint8_t*>(gray.values.data()));
  cv::Mat colored;
  cv::applyColorMap(mat, colored, cv::COLORMAP_JET);
  return from_bgr(colored);
}

}  // namespace saferoad
