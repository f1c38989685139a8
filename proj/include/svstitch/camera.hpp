#pragma once

#include <optional>

#include "svstitch/geometry.hpp"
#include "svstitch/image.hpp"

namespace svstitch {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  // fx = fy = 0.8 * width, principal point at the frame centre.
  static CameraIntrinsics default_for(int width, int height);
};

// Throws InvalidArgument unless fx, fy > 0 and cx, cy are finite.
void validate(const CameraIntrinsics& k);

// Pixel scaling of the unrolled cylinder. Longitude and the unit height
// coordinate are both multiplied by `radius` and shifted by (out_cx, out_cy).
struct CylindricalConfig {
  double radius = 1.0;
  int out_width = 1;
  int out_height = 1;
  double out_cx = 0.0;
  double out_cy = 0.0;
};

// Builds a canvas that contains the full projected source frame, with the
// optical axis at its centre. radius defaults to fx when not given.
CylindricalConfig make_cylindrical_config(const CameraIntrinsics& k, int src_width,
                                          int src_height,
                                          std::optional<double> radius = {});

// Source pixel -> unrolled-cylinder pixel.
Vec2 forward_project(const Vec2& p, const CameraIntrinsics& k,
                     const CylindricalConfig& c);

// Unrolled-cylinder pixel -> source pixel. Empty when the longitude reaches
// +-pi/2, i.e. the ray no longer hits the image plane.
std::optional<Vec2> backward_project(const Vec2& p, const CameraIntrinsics& k,
                                     const CylindricalConfig& c);

// Inverse-maps every output pixel into `img` and samples it bilinearly.
// The output mask is 0 wherever the source position is outside the source
// frame, so black corners never appear as valid pixels.
MaskedImage cylindrical_warp(const MaskedImage& img, const CameraIntrinsics& k,
                             const CylindricalConfig& c);

}  // namespace svstitch
