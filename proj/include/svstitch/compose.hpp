#pragma once

#include <vector>

#include "svstitch/image.hpp"

namespace svstitch {

// Per-pixel weights on a panorama canvas.
struct WeightMap {
  int width = 0;
  int height = 0;
  std::vector<double> w;

  WeightMap() = default;
  WeightMap(int width_, int height_, double fill = 0.0)
      : width(width_), height(height_), w(static_cast<std::size_t>(width_) * height_, fill) {}
  double& at(int x, int y) { return w[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return w[static_cast<std::size_t>(y) * width + x]; }
};

struct SeamOptions {
  int feather = 5;          // width of the linear ramp across the seam, px
  bool horizontal = false;  // seam runs left to right; a lies above it
};

// Seam between two images on a shared canvas. `seam[r]` is the seam column
// of canvas row r (the seam row of column r when horizontal), or -1 where
// the images do not overlap.
struct SeamMaskPair {
  WeightMap mask_a;
  WeightMap mask_b;
  std::vector<int> seam;
  double cost = 0.0;
};

// Pixels where both masks are positive.
std::vector<bool> overlap_region(const MaskedImage& a, const MaskedImage& b);

// Squared colour difference per canvas pixel.
std::vector<double> seam_cost(const MaskedImage& a, const MaskedImage& b);

// Minimum-cost seam through the overlap by dynamic programming: one pixel
// per row, moving at most one column between consecutive rows. Rows without
// overlap split the band into independent pieces. Returns per-row columns
// (-1 off the overlap) and writes the total cost.
std::vector<int> min_cost_seam(const std::vector<double>& cost, const std::vector<bool>& overlap,
                               int width, int height, double* total = nullptr);

// Vertical seam by default: a keeps the side left of the seam, b the right,
// with a linear feather. Off the overlap each mask is its image's validity.
// Throws NoOverlap when the images share no pixel.
SeamMaskPair pairwise_seam(const MaskedImage& a, const MaskedImage& b,
                           const SeamOptions& opt = {});

// Product of each image's pairwise masks. Edge images must carry exactly
// one mask, interior images two. Throws InvalidArgument otherwise.
std::vector<WeightMap> final_masks(const std::vector<std::vector<WeightMap>>& pair_masks);

// Rescales the masks so they sum to one wherever any image is valid. Where
// every mask is zero on a covered pixel, the valid images share it equally.
void normalize_masks(std::vector<WeightMap>& finals, const std::vector<MaskedImage>& warped);

struct Panorama {
  MaskedImage image;
  std::vector<WeightMap> final_masks;
};

// Weighted average of the warped images. The panorama mask is the largest
// input mask at pixels with positive total weight.
Panorama blend(const std::vector<MaskedImage>& warped, const std::vector<WeightMap>& finals);

// Seams between neighbours i and i+1, final masks, normalization and blend.
Panorama compose(const std::vector<MaskedImage>& warped, const SeamOptions& opt = {});

}  // namespace svstitch
