#pragma once

#include <cstddef>
#include <vector>

namespace svstitch {

// Row-major raster with a per-pixel validity mask. Pixel (x, y) covers the
// unit square [x, x+1) x [y, y+1); its sample sits at (x + 0.5, y + 0.5) in
// continuous coordinates. Every geometric routine in the library uses this
// convention, so an image of width W spans [0, W] horizontally.
struct MaskedImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;  // width * height * channels, values in [0, 1]
  std::vector<double> mask;    // width * height, values in [0, 1]

  MaskedImage() = default;
  MaskedImage(int w, int h, int c, double fill = 0.0, double mask_fill = 0.0);

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  double& at(int x, int y, int c) { return pixels[index(x, y) * channels + c]; }
  double at(int x, int y, int c) const {
    return pixels[index(x, y) * channels + c];
  }
  double& mask_at(int x, int y) { return mask[index(x, y)]; }
  double mask_at(int x, int y) const { return mask[index(x, y)]; }

  bool empty() const { return width <= 0 || height <= 0; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

// Throws InvalidArgument when sizes or value ranges are inconsistent.
void validate(const MaskedImage& img);

// Result of sampling a raster at a continuous coordinate. Samples whose
// neighbours carry mask 0 contribute no weight to the value.
struct Sample {
  double value[3] = {0.0, 0.0, 0.0};
  double mask = 0.0;
};

// Partial derivatives of a Sample with respect to the sampling position.
struct SampleJacobian {
  double dvalue_dx[3] = {0.0, 0.0, 0.0};
  double dvalue_dy[3] = {0.0, 0.0, 0.0};
  double dmask_dx = 0.0;
  double dmask_dy = 0.0;
};

// Mask-weighted bilinear sample at continuous position (x, y). Positions
// outside [0, W] x [0, H] return mask 0.
Sample sample_bilinear(const MaskedImage& img, double x, double y,
                       SampleJacobian* jac = nullptr);

// Crop or pad into a new canvas whose origin sits at (x0, y0) of `img`.
MaskedImage crop(const MaskedImage& img, int x0, int y0, int width, int height);

MaskedImage to_gray(const MaskedImage& img);

// Rounds to the nearest 1/255 step (half up), as saving to 8-bit would.
MaskedImage quantize8(const MaskedImage& img);

}  // namespace svstitch
