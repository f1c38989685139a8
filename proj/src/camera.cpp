#include "svstitch/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "svstitch/errors.hpp"

namespace svstitch {

CameraIntrinsics CameraIntrinsics::default_for(int width, int height) {
  const double f = 0.8 * width;
  return {f, f, 0.5 * width, 0.5 * height};
}

void validate(const CameraIntrinsics& k) {
  if (!(k.fx > 0.0) || !(k.fy > 0.0) || !std::isfinite(k.fx) ||
      !std::isfinite(k.fy) || !std::isfinite(k.cx) || !std::isfinite(k.cy)) {
    fail(ErrorKind::InvalidArgument, "camera intrinsics must have fx, fy > 0");
  }
}

static void validate(const CylindricalConfig& c) {
  if (!(c.radius > 0.0) || !std::isfinite(c.radius)) {
    fail(ErrorKind::InvalidConfig, "cylinder radius must be positive");
  }
  if (c.out_width < 1 || c.out_height < 1) {
    fail(ErrorKind::InvalidConfig, "cylindrical output size must be at least 1x1");
  }
}

Vec2 forward_project(const Vec2& p, const CameraIntrinsics& k,
                     const CylindricalConfig& c) {
  const double X = (p.x - k.cx) / k.fx;
  const double Y = (p.y - k.cy) / k.fy;
  constexpr double Z = 1.0;
  const double lambda = std::atan2(X, Z);
  const double v_unit = Y / std::sqrt(X * X + Z * Z);
  return {c.radius * lambda + c.out_cx, c.radius * v_unit + c.out_cy};
}

std::optional<Vec2> backward_project(const Vec2& p, const CameraIntrinsics& k,
                                     const CylindricalConfig& c) {
  const double lambda = (p.x - c.out_cx) / c.radius;
  const double v_unit = (p.y - c.out_cy) / c.radius;
  if (!(std::abs(lambda) < std::numbers::pi / 2)) return std::nullopt;
  const double X = std::sin(lambda);
  const double Y = v_unit;
  const double Z = std::cos(lambda);
  // Longitudes rebuilt from pixel coordinates can land one ulp short of pi/2.
  if (Z <= 1e-12) return std::nullopt;
  return Vec2{k.fx * X / Z + k.cx, k.fy * Y / Z + k.cy};
}

CylindricalConfig make_cylindrical_config(const CameraIntrinsics& k, int src_width,
                                          int src_height,
                                          std::optional<double> radius) {
  validate(k);
  if (src_width < 1 || src_height < 1) {
    fail(ErrorKind::InvalidConfig, "source frame must be at least 1x1");
  }
  CylindricalConfig probe;
  probe.radius = radius.value_or(k.fx);
  if (!(probe.radius > 0.0)) fail(ErrorKind::InvalidConfig, "radius must be positive");

  // The vertical extremes sit on the column through the principal point, so
  // scan the whole border plus that column and the principal row.
  double umin = std::numeric_limits<double>::infinity();
  double umax = -umin, vmin = umin, vmax = -umin;
  auto visit = [&](double x, double y) {
    const Vec2 q = forward_project({x, y}, k, probe);
    umin = std::min(umin, q.x);
    umax = std::max(umax, q.x);
    vmin = std::min(vmin, q.y);
    vmax = std::max(vmax, q.y);
  };
  for (int x = 0; x <= src_width; ++x) {
    visit(x, 0.0);
    visit(x, src_height);
  }
  for (int y = 0; y <= src_height; ++y) {
    visit(0.0, y);
    visit(src_width, y);
  }
  const double pcx = std::clamp(k.cx, 0.0, static_cast<double>(src_width));
  const double pcy = std::clamp(k.cy, 0.0, static_cast<double>(src_height));
  visit(pcx, 0.0);
  visit(pcx, src_height);
  visit(0.0, pcy);
  visit(src_width, pcy);

  CylindricalConfig c = probe;
  const double span_u = umax - umin;
  const double span_v = vmax - vmin;
  c.out_width = std::max(1, static_cast<int>(std::ceil(span_u - 1e-9)));
  c.out_height = std::max(1, static_cast<int>(std::ceil(span_v - 1e-9)));
  c.out_cx = -umin + 0.5 * (c.out_width - span_u);
  c.out_cy = -vmin + 0.5 * (c.out_height - span_v);
  return c;
}

MaskedImage cylindrical_warp(const MaskedImage& img, const CameraIntrinsics& k,
                             const CylindricalConfig& c) {
  validate(img);
  validate(k);
  validate(c);
  MaskedImage out(c.out_width, c.out_height, img.channels);
  for (int y = 0; y < c.out_height; ++y) {
    for (int x = 0; x < c.out_width; ++x) {
      const auto src = backward_project({x + 0.5, y + 0.5}, k, c);
      if (!src) continue;
      const Sample s = sample_bilinear(img, src->x, src->y);
      if (s.mask <= 0.0) continue;
      out.mask_at(x, y) = std::min(1.0, s.mask);
      for (int ch = 0; ch < img.channels; ++ch) {
        out.at(x, y, ch) = std::clamp(s.value[ch], 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace svstitch
