#include "svstitch/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "svstitch/errors.hpp"

namespace svstitch {

ImageOrder order_images(int n) {
  if (n < 2) fail(ErrorKind::InvalidArgument, "a surround set needs at least 2 images");
  ImageOrder o;
  o.center = (n - 1) / 2;
  for (int i = o.center - 1; i >= 0; --i) o.left.push_back(i);
  for (int i = o.center + 1; i < n; ++i) o.right.push_back(i);
  return o;
}

GlobalWarp identity_global_warp(int rows, int cols, int image_index) {
  GlobalWarp w;
  w.rows = rows;
  w.cols = cols;
  w.residual.assign(static_cast<std::size_t>(rows) * cols, Vec2{});
  w.image_index = image_index;
  return w;
}

GlobalWarp extend(const GlobalWarp& w, const PairMotion& step) {
  if (step.rows != w.rows || step.cols != w.cols ||
      step.residual.size() != w.residual.size())
    fail(ErrorKind::InvalidArgument, "pair motion grid does not match the chain");
  GlobalWarp out;
  out.h = w.h * four_pt_to_matrix(step.h_offsets);
  const Eigen::Matrix3d& m = out.h.m;
  if (!m.allFinite() || std::abs(m.determinant()) <= 1e-12 * std::pow(m.norm(), 3))
    fail(ErrorKind::DegenerateChain,
         "singular accumulated homography at image " + std::to_string(step.tar_index));
  out.rows = w.rows;
  out.cols = w.cols;
  out.residual = w.residual;
  for (std::size_t k = 0; k < out.residual.size(); ++k) out.residual[k] += step.residual[k];
  out.image_index = step.tar_index;
  return out;
}

std::vector<GlobalWarp> propagate_chain(const GlobalWarp& start,
                                        const std::vector<PairMotion>& steps) {
  std::vector<GlobalWarp> out;
  out.reserve(steps.size());
  const GlobalWarp* prev = &start;
  for (const auto& s : steps) {
    out.push_back(extend(*prev, s));
    prev = &out.back();
  }
  return out;
}

std::vector<GlobalWarp> propagate_motion(int n, const std::vector<PairMotion>& left,
                                         const std::vector<PairMotion>& right) {
  const ImageOrder order = order_images(n);
  if (left.size() != order.left.size() || right.size() != order.right.size())
    fail(ErrorKind::InvalidArgument, "pair motion count does not match the image order");
  const PairMotion& any = right.empty() ? left.front() : right.front();
  std::vector<GlobalWarp> out(n);
  out[order.center] = identity_global_warp(any.rows, any.cols, order.center);
  const auto place = [&](const std::vector<int>& chain, const std::vector<PairMotion>& steps) {
    const auto warps = propagate_chain(out[order.center], steps);
    for (std::size_t k = 0; k < chain.size(); ++k) {
      out[chain[k]] = warps[k];
      out[chain[k]].image_index = chain[k];
    }
  };
  place(order.left, left);
  place(order.right, right);
  return out;
}

PanoramaLayout global_warp_grids(const std::vector<GlobalWarp>& warps,
                                 const std::vector<std::pair<int, int>>& sizes) {
  if (warps.empty() || warps.size() != sizes.size())
    fail(ErrorKind::InvalidArgument, "need one frame size per warp");
  PanoramaLayout layout;
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (std::size_t i = 0; i < warps.size(); ++i) {
    const GlobalWarp& w = warps[i];
    ControlGrid g = apply_homography_to_grid(
        make_uniform_grid(w.rows - 1, w.cols - 1, sizes[i].first, sizes[i].second), w.h);
    for (std::size_t k = 0; k < g.points.size(); ++k) {
      g.points[k] += w.residual[k];
      const Vec2& p = g.points[k];
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        fail(ErrorKind::DegenerateWarp, "non-finite global grid point");
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
    layout.grids.push_back(std::move(g));
  }
  layout.offset = {-std::floor(min_x), -std::floor(min_y)};
  for (auto& g : layout.grids)
    for (auto& p : g.points) p += layout.offset;
  layout.canvas = {0, 0, static_cast<int>(std::ceil(max_x + layout.offset.x)),
                   static_cast<int>(std::ceil(max_y + layout.offset.y))};
  return layout;
}

}  // namespace svstitch
