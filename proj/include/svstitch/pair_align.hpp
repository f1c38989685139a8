#pragma once

#include <vector>

#include <Eigen/Core>

#include "svstitch/image.hpp"
#include "svstitch/losses.hpp"
#include "svstitch/mesh_warp.hpp"

namespace svstitch {

struct AlignConfig {
  int grid_u = 12;
  int grid_v = 12;
  // Pyramid scales, coarse to fine. Each must be 1/k for an integer k.
  std::vector<double> pyramid_scales = {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2};
  // The homography stage runs on this many of the coarsest levels, then the
  // mesh stage on this many of the finest. The two ranges may share levels.
  int homography_levels = 4;
  int mesh_levels = 1;
  int max_iters_homography = 150;
  int max_iters_mesh = 100;
  // Largest per-iteration parameter change, in pixels of the current level.
  double max_step_homography = 1.0;
  double max_step_mesh = 0.5;
  double tol = 1e-6;
  LossWeights weights;

  // Exhaustive integer-shift search that seeds the homography stage.
  bool seed_translation = true;
  double seed_scale = 1.0 / 8;
  // +1: tar lies right of ref, -1: left, 0: search both sides.
  int direction_hint = 0;
  // Shifts whose overlap covers less than this fraction of the frame are skipped.
  double min_overlap_fraction = 0.04;
  // The best shift must score below this fraction of the median shift score;
  // otherwise the images are reported as not overlapping.
  double min_match_ratio = 0.5;
  // Pixel correlation the aligned overlap must reach at the finest level;
  // below it the pair is reported as not overlapping. -1 disables the check.
  double min_overlap_correlation = 0.8;
};

// Throws InvalidConfig on bad grid sizes, scales, iteration counts or weights.
void validate(const AlignConfig& cfg);

// Motion of tar into the ref frame: a homography given by its corner offsets
// plus per-control-point displacements added after the homography.
struct PairMotion {
  FourPtOffsets h_offsets;
  int rows = 0;
  int cols = 0;
  std::vector<Vec2> residual;
  int ref_index = 0;
  int tar_index = 1;
  LossReport report;  // objective terms at the finest level
};

// Area-averaged, mask-weighted downsampling. A level pixel covers a k x k
// block; its mask is the block's mean mask and its value the mask-weighted
// mean. Rows and columns that do not fill a whole block are dropped.
MaskedImage downsample(const MaskedImage& img, int factor);

std::vector<MaskedImage> build_pyramid(const MaskedImage& img, const std::vector<double>& scales);

// Integer factor k for scale 1/k. Throws InvalidArgument otherwise.
int scale_factor(double scale);

// Source grid (uniform over the tar frame) and destination grid of a motion.
ControlGrid motion_source_grid(const PairMotion& m);
ControlGrid motion_destination_grid(const PairMotion& m);

PairMotion identity_motion(int grid_u, int grid_v, double width, double height);

// Objective of the homography stage at one level: alignment of the
// homography-warped tar with ref, plus the grid terms of the homography-mapped
// uniform grid. `offsets` are in full-resolution pixels; the level images
// are 1/factor of full resolution.
double homography_stage_loss(const MaskedImage& ref_level, const MaskedImage& tar_level,
                             int factor, const FourPtOffsets& offsets, int grid_u, int grid_v,
                             const LossWeights& w, Eigen::VectorXd* grad = nullptr);

// Objective of the mesh stage at one level: TPS-warped alignment plus grid
// terms of H(src) + residual. `residual` is in full-resolution pixels.
double mesh_stage_loss(const MaskedImage& ref_level, const MaskedImage& tar_level, int factor,
                       const ControlGrid& homography_grid, const std::vector<Vec2>& residual,
                       const LossWeights& w, std::vector<Vec2>* grad = nullptr);

// Best integer translation of tar into the ref frame, in full-resolution
// pixels, found by exhaustive search at cfg.seed_scale and refined on finer
// levels. Throws NoOverlap when no shift stands out.
Vec2 seed_translation(const MaskedImage& ref, const MaskedImage& tar, const AlignConfig& cfg);

// Coarse-to-fine estimate of the motion taking tar into the ref frame.
// Throws NoOverlap or OptimizationFailed.
PairMotion estimate_pair_motion(const MaskedImage& ref, const MaskedImage& tar,
                                const AlignConfig& cfg);

// TPS-warps tar onto `canvas` (given in ref coordinates) with `motion`.
MaskedImage warp_pair(const MaskedImage& tar, const PairMotion& motion, const BBox& canvas);

}  // namespace svstitch
