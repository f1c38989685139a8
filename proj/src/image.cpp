#include "svstitch/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svstitch/errors.hpp"

namespace svstitch {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::SingularConfiguration: return "singular-configuration";
    case ErrorKind::DegenerateWarp: return "degenerate-warp";
    case ErrorKind::DegenerateChain: return "degenerate-chain";
    case ErrorKind::NoOverlap: return "no-overlap";
    case ErrorKind::OptimizationFailed: return "optimization-failed";
    case ErrorKind::LoadError: return "load-error";
    case ErrorKind::InvalidSpec: return "invalid-spec";
  }
  return "unknown";
}

MaskedImage::MaskedImage(int w, int h, int c, double fill, double mask_fill)
    : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || (c != 1 && c != 3)) {
    fail(ErrorKind::InvalidArgument,
         "MaskedImage: bad shape " + std::to_string(w) + "x" +
             std::to_string(h) + "x" + std::to_string(c));
  }
  pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
  mask.assign(static_cast<std::size_t>(w) * h, mask_fill);
}

void validate(const MaskedImage& img) {
  if (img.width < 0 || img.height < 0 ||
      (img.channels != 1 && img.channels != 3)) {
    fail(ErrorKind::InvalidArgument, "MaskedImage: bad shape");
  }
  if (img.pixels.size() != img.pixel_count() * img.channels ||
      img.mask.size() != img.pixel_count()) {
    fail(ErrorKind::InvalidArgument, "MaskedImage: buffer size mismatch");
  }
  // Interpolation may overshoot the unit range by rounding error only.
  auto in_unit = [](double v) { return v >= -1e-9 && v <= 1.0 + 1e-9; };
  if (!std::all_of(img.pixels.begin(), img.pixels.end(), in_unit) ||
      !std::all_of(img.mask.begin(), img.mask.end(), in_unit)) {
    fail(ErrorKind::InvalidArgument, "MaskedImage: values outside [0, 1]");
  }
}

Sample sample_bilinear(const MaskedImage& img, double x, double y,
                       SampleJacobian* jac) {
  Sample s;
  if (jac) *jac = SampleJacobian{};
  if (!(x >= 0.0 && x <= img.width && y >= 0.0 && y <= img.height)) {
    return s;
  }
  const double u = x - 0.5;
  const double v = y - 0.5;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const double fx = u - x0;
  const double fy = v - y0;

  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};
  const double dwx[2] = {-1.0, 1.0};

  double m = 0.0, dm_dx = 0.0, dm_dy = 0.0;
  double num[3] = {0, 0, 0}, dnum_dx[3] = {0, 0, 0}, dnum_dy[3] = {0, 0, 0};
  const int C = img.channels;
  for (int j = 0; j < 2; ++j) {
    const int yy = y0 + j;
    if (yy < 0 || yy >= img.height) continue;
    for (int i = 0; i < 2; ++i) {
      const int xx = x0 + i;
      if (xx < 0 || xx >= img.width) continue;
      const double mk = img.mask_at(xx, yy);
      if (mk <= 0.0) continue;
      const double b = wx[i] * wy[j] * mk;
      const double bx = dwx[i] * wy[j] * mk;
      const double by = wx[i] * dwx[j] * mk;
      m += b;
      dm_dx += bx;
      dm_dy += by;
      const double* px = &img.pixels[img.index(xx, yy) * C];
      for (int c = 0; c < C; ++c) {
        num[c] += b * px[c];
        dnum_dx[c] += bx * px[c];
        dnum_dy[c] += by * px[c];
      }
    }
  }
  constexpr double kTiny = 1e-12;
  if (m <= kTiny) return s;
  s.mask = m;
  for (int c = 0; c < C; ++c) s.value[c] = num[c] / m;
  if (jac) {
    jac->dmask_dx = dm_dx;
    jac->dmask_dy = dm_dy;
    for (int c = 0; c < C; ++c) {
      jac->dvalue_dx[c] = (dnum_dx[c] - s.value[c] * dm_dx) / m;
      jac->dvalue_dy[c] = (dnum_dy[c] - s.value[c] * dm_dy) / m;
    }
  }
  return s;
}

MaskedImage crop(const MaskedImage& img, int x0, int y0, int width, int height) {
  MaskedImage out(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = y + y0;
    if (sy < 0 || sy >= img.height) continue;
    for (int x = 0; x < width; ++x) {
      const int sx = x + x0;
      if (sx < 0 || sx >= img.width) continue;
      out.mask_at(x, y) = img.mask_at(sx, sy);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

MaskedImage to_gray(const MaskedImage& img) {
  if (img.channels == 1) return img;
  MaskedImage out(img.width, img.height, 1);
  out.mask = img.mask;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double* p = &img.pixels[i * 3];
    out.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return out;
}

MaskedImage quantize8(const MaskedImage& img) {
  MaskedImage out = img;
  auto q = [](double v) {
    return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0;
  };
  for (auto& v : out.pixels) v = q(v);
  for (auto& v : out.mask) v = q(v);
  return out;
}

}  // namespace svstitch
