#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "svstitch/geometry.hpp"
#include "svstitch/image.hpp"

namespace svstitch {

// (U+1) x (V+1) control points of a mesh over a W x H source frame.
// Row i, column j lives at points[i * cols + j].
struct ControlGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Vec2> points;
  double source_width = 0.0;
  double source_height = 0.0;

  int grid_u() const { return rows - 1; }
  int grid_v() const { return cols - 1; }
  Vec2& at(int i, int j) { return points[static_cast<std::size_t>(i) * cols + j]; }
  const Vec2& at(int i, int j) const {
    return points[static_cast<std::size_t>(i) * cols + j];
  }
  std::size_t size() const { return points.size(); }
};

void validate(const ControlGrid& g);

// Corner displacements in TL, TR, BL, BR order.
struct FourPtOffsets {
  std::array<Vec2, 4> offsets{};
  double source_width = 0.0;
  double source_height = 0.0;
};

// Normalized DLT: the homography taking each frame corner to corner + offset.
// Throws SingularConfiguration when three displaced corners are collinear.
Homography four_pt_to_matrix(const FourPtOffsets& o);

// Offsets that reproduce `h` at the four frame corners.
FourPtOffsets matrix_to_four_pt(const Homography& h, double width, double height);

// d(H)/d(offset_k) for the 8 offset coordinates, ordered
// (TL.x, TL.y, TR.x, TR.y, BL.x, BL.y, BR.x, BR.y). Obtained by implicit
// differentiation of the exact four-point system with H(2,2) fixed to 1.
std::array<Eigen::Matrix3d, 8> four_pt_jacobian(const FourPtOffsets& o);

// Throws InvalidArgument when U or V is zero.
ControlGrid make_uniform_grid(int u, int v, double width, double height);

// Throws DegenerateWarp when a point maps to the w = 0 plane.
ControlGrid apply_homography_to_grid(const ControlGrid& g, const Homography& h);

// Integer box around every control point, padded by one pixel.
BBox warped_bounds(std::span<const ControlGrid> grids);

// Thin-plate spline f with f(from_k) = to_k exactly, kernel r^2 log r.
// Coordinates are normalized by constants derived from `to`, so derivatives
// with respect to `from` need no normalization terms.
class ThinPlateSpline {
 public:
  // Throws DegenerateWarp when two `from` points coincide within 1e-9 px.
  ThinPlateSpline(std::span<const Vec2> from, std::span<const Vec2> to);

  Vec2 operator()(const Vec2& p) const;

  // Reverse-mode accumulator for d(loss)/d(from) given per-point d(loss)/d(f(p)).
  class Adjoint {
   public:
    explicit Adjoint(const ThinPlateSpline& tps);
    void add(const Vec2& p, const Vec2& dloss_dq);
    std::vector<Vec2> gradient() const;

   private:
    const ThinPlateSpline* tps_;
    Eigen::MatrixX2d coef_grad_;          // d(loss)/d(coefficients)
    std::vector<Vec2> direct_;            // kernel-position terms, normalized
    std::vector<double> scratch_;
  };

  std::size_t size() const { return from_.size(); }

 private:
  Vec2 normalize(const Vec2& p) const { return (p - center_) * (1.0 / scale_); }

  std::vector<Vec2> from_;  // normalized
  Vec2 center_;
  double scale_ = 1.0;
  Eigen::MatrixX2d coef_;   // n kernel weights, then constant, x, y terms
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// Warps `img` so that control point src_k lands on dst_k, sampled over the
// canvas box given in destination coordinates. The output mask is zero
// outside the convex hull of the destination points.
MaskedImage tps_warp(const MaskedImage& img, const ControlGrid& src,
                     const ControlGrid& dst, const BBox& canvas);

// Per-pixel homography sampling: output pixel p reads img at h^-1(p).
MaskedImage homography_warp(const MaskedImage& img, const Homography& h,
                            const BBox& canvas);

}  // namespace svstitch
