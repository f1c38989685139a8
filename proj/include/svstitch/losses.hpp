#pragma once

#include <vector>

#include "svstitch/geometry.hpp"
#include "svstitch/image.hpp"
#include "svstitch/mesh_warp.hpp"

namespace svstitch {

// Weights of the warp objective
//   total = alpha * alignment + beta * distortion
//         + gamma * (gamma1 * shape + gamma2 * size + gamma3 * fold).
// Alignment is a mean intensity difference in [0, 1] while a few pixels of
// perspective change already cost ~0.05 in the rectangular terms, hence the
// small gamma.
struct LossWeights {
  double alpha = 1.0;
  double beta = 0.25;
  double gamma = 0.005;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double gamma3 = 1.0;
};

void validate(const LossWeights& w);

struct LossReport {
  double alignment = 0.0;
  double distortion = 0.0;
  double shape = 0.0;
  double size = 0.0;
  double fold = 0.0;
  double total = 0.0;
};

// Scalar loss plus its gradient with respect to each control point.
struct GridLoss {
  double value = 0.0;
  std::vector<Vec2> grad;
};

// Axis alignment of the warped mesh: vertical drift of horizontal edges and
// horizontal drift of vertical edges, each normalized by the nominal cell size.
GridLoss shape_loss(const ControlGrid& g);

// Deviation of every edge's normalized length from one.
GridLoss size_loss(const ControlGrid& g);

// Hinge on reversed edges: horizontal edges must point right, vertical
// edges down.
GridLoss fold_loss(const ControlGrid& g);

GridLoss rectangular_loss(const ControlGrid& g, const LossWeights& w);

// Mean squared difference of consecutive edges along each grid line, with
// edges expressed in units of the nominal cell size. Zero on any affine grid.
GridLoss distortion_loss(const ControlGrid& g);

// Per-pixel derivatives of alignment_loss with respect to the warped image.
struct AlignmentGrad {
  std::vector<double> dvalue;  // width * height * channels
  std::vector<double> dmask;   // width * height
};

// Mask-weighted mean absolute difference over the overlap:
//   sum_p m_w(p) m_r(p) |w(p) - r(p)|_1 / C  /  sum_p m_w(p) m_r(p).
// Returns +infinity when the masks do not overlap.
double alignment_loss(const MaskedImage& warped, const MaskedImage& ref,
                      AlignmentGrad* grad = nullptr);

// alignment_loss(tps_warp(tar, src, dst, canvas), ref) with its gradient
// with respect to the dst control points. `ref` must be canvas-sized.
GridLoss warp_alignment_loss(const MaskedImage& tar, const MaskedImage& ref,
                             const ControlGrid& src, const ControlGrid& dst,
                             const BBox& canvas);

LossReport total_warp_loss(const MaskedImage& warped_tar, const MaskedImage& ref,
                           const ControlGrid& g, const LossWeights& w);

// Same as total_warp_loss but with a precomputed alignment term.
LossReport combine_losses(double alignment, const ControlGrid& g,
                          const LossWeights& w);

}  // namespace svstitch
