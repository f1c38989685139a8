#pragma once

#include <utility>
#include <vector>

#include "svstitch/geometry.hpp"
#include "svstitch/mesh_warp.hpp"
#include "svstitch/pair_align.hpp"

namespace svstitch {

// Center image and the two chains walking outward from it. Chain element k
// uses element k-1 (or the center, for k = 0) as its reference.
struct ImageOrder {
  int center = 0;
  std::vector<int> left;   // center-1 ... 0
  std::vector<int> right;  // center+1 ... n-1
};

// center = floor((n - 1) / 2), so even counts lean left. Throws InvalidArgument
// for n < 2.
ImageOrder order_images(int n);

// Motion of one image into the center frame: dst = h(uniform grid) + residual.
struct GlobalWarp {
  Homography h;
  int rows = 0;
  int cols = 0;
  std::vector<Vec2> residual;
  int image_index = 0;
};

GlobalWarp identity_global_warp(int rows, int cols, int image_index);

// Appends one more step to the chain ending at `w`: the step's homography is
// multiplied on the right and its residual added point by point. Throws
// DegenerateChain when the product is singular.
GlobalWarp extend(const GlobalWarp& w, const PairMotion& step);

// Accumulated warps of one chain; element k covers steps 0..k.
std::vector<GlobalWarp> propagate_chain(const GlobalWarp& start,
                                        const std::vector<PairMotion>& steps);

// Global warps for all n images, indexed by image. `left` and `right` hold
// the pair motions of each chain ordered from the center outward, with sizes
// matching order_images(n).
std::vector<GlobalWarp> propagate_motion(int n, const std::vector<PairMotion>& left,
                                         const std::vector<PairMotion>& right);

struct PanoramaLayout {
  std::vector<ControlGrid> grids;  // destination grids on the canvas
  Vec2 offset;                     // added to center-frame coordinates
  BBox canvas;                     // origin at (0, 0)
};

// Destination grids of every image in a shared frame. `sizes` holds the
// (width, height) of each image's source frame. All grids are shifted by a
// common integer offset that puts the smallest coordinate at the origin.
PanoramaLayout global_warp_grids(const std::vector<GlobalWarp>& warps,
                                 const std::vector<std::pair<int, int>>& sizes);

}  // namespace svstitch
