#include "svstitch/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(
      std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  bool ok = false;
  try {
    std::vector<int> params;
    if (path.extension() == ".png") {
      params = {cv::IMWRITE_PNG_COMPRESSION, 6};
    }
    ok = cv::imwrite(path.string(), mat, params);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::LoadError, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) fail(ErrorKind::LoadError, "cannot write " + path.string());
}

}  // namespace

MaskedImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::LoadError, "missing image file: " + path.string());
  }
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    mat.release();
  }
  if (mat.empty()) {
    fail(ErrorKind::LoadError, "cannot decode image: " + path.string());
  }
  if (mat.depth() != CV_8U) {
    fail(ErrorKind::LoadError, "only 8-bit images are supported: " + path.string());
  }
  const int src_channels = mat.channels();
  const int channels = src_channels == 1 ? 1 : 3;
  MaskedImage img(mat.cols, mat.rows, channels, 0.0, 1.0);
  for (int y = 0; y < mat.rows; ++y) {
    const unsigned char* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < mat.cols; ++x) {
      const unsigned char* px = row + x * src_channels;
      if (channels == 1) {
        img.at(x, y, 0) = px[0] / 255.0;
      } else {
        // OpenCV stores BGR(A).
        img.at(x, y, 0) = px[2] / 255.0;
        img.at(x, y, 1) = px[1] / 255.0;
        img.at(x, y, 2) = px[0] / 255.0;
      }
    }
  }
  return img;
}

void save_image(const std::filesystem::path& path, const MaskedImage& img) {
  const int type = img.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat mat(img.height, img.width, type);
  for (int y = 0; y < img.height; ++y) {
    unsigned char* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) {
      const bool valid = img.mask_at(x, y) > 0.0;
      unsigned char* px = row + x * img.channels;
      if (img.channels == 1) {
        px[0] = valid ? to_byte(img.at(x, y, 0)) : 0;
      } else {
        px[0] = valid ? to_byte(img.at(x, y, 2)) : 0;
        px[1] = valid ? to_byte(img.at(x, y, 1)) : 0;
        px[2] = valid ? to_byte(img.at(x, y, 0)) : 0;
      }
    }
  }
  write_or_throw(path, mat);
}

void save_mask(const std::filesystem::path& path, const MaskedImage& img) {
  cv::Mat mat(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    unsigned char* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) row[x] = to_byte(img.mask_at(x, y));
  }
  write_or_throw(path, mat);
}

void load_mask_into(const std::filesystem::path& path, MaskedImage& img) {
  MaskedImage m = load_image(path);
  if (m.width != img.width || m.height != img.height || m.channels != 1) {
    fail(ErrorKind::LoadError, "mask does not match image: " + path.string());
  }
  img.mask = std::move(m.pixels);
}

}  // namespace svstitch
