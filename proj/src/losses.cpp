#include "svstitch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Visits horizontal edges (i, j) -> (i, j+1) and vertical edges
// (i, j) -> (i+1, j), handing each edge vector and its endpoint indices.
template <typename Hor, typename Ver>
void for_each_edge(const ControlGrid& g, Hor&& hor, Ver&& ver) {
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j + 1 < g.cols; ++j) {
      const std::size_t a = static_cast<std::size_t>(i) * g.cols + j;
      hor(g.points[a + 1] - g.points[a], a, a + 1);
    }
  for (int i = 0; i + 1 < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const std::size_t a = static_cast<std::size_t>(i) * g.cols + j;
      const std::size_t b = a + g.cols;
      ver(g.points[b] - g.points[a], a, b);
    }
}

struct EdgeNorms {
  double hor_count, ver_count;  // (U+1) V and U (V+1)
  double hor_x, hor_y;          // V / W and V / H
  double ver_x, ver_y;          // U / W and U / H
};

EdgeNorms edge_norms(const ControlGrid& g) {
  validate(g);
  const double u = g.grid_u(), v = g.grid_v();
  if (!(g.source_width > 0.0) || !(g.source_height > 0.0)) {
    fail(ErrorKind::InvalidArgument, "control grid needs a positive source size");
  }
  return {(u + 1.0) * v, u * (v + 1.0), v / g.source_width, v / g.source_height,
          u / g.source_width, u / g.source_height};
}

GridLoss zero_loss(const ControlGrid& g) { return {0.0, std::vector<Vec2>(g.size())}; }

}  // namespace

void validate(const LossWeights& w) {
  for (double v : {w.alpha, w.beta, w.gamma, w.gamma1, w.gamma2, w.gamma3}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorKind::InvalidConfig, "loss weights must be finite and >= 0");
    }
  }
}

GridLoss shape_loss(const ControlGrid& g) {
  const EdgeNorms n = edge_norms(g);
  GridLoss out = zero_loss(g);
  double hsum = 0.0, vsum = 0.0;
  for_each_edge(
      g,
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        const double t = e.y * n.hor_y;
        hsum += std::abs(t);
        const double d = sgn(t) * n.hor_y / n.hor_count;
        out.grad[b].y += d;
        out.grad[a].y -= d;
      },
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        const double t = e.x * n.ver_x;
        vsum += std::abs(t);
        const double d = sgn(t) * n.ver_x / n.ver_count;
        out.grad[b].x += d;
        out.grad[a].x -= d;
      });
  out.value = hsum / n.hor_count + vsum / n.ver_count;
  return out;
}

GridLoss size_loss(const ControlGrid& g) {
  const EdgeNorms n = edge_norms(g);
  GridLoss out = zero_loss(g);
  double hsum = 0.0, vsum = 0.0;
  for_each_edge(
      g,
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        const double t = e.x * n.hor_x;
        hsum += std::abs(std::abs(t) - 1.0);
        const double d = sgn(std::abs(t) - 1.0) * sgn(t) * n.hor_x / n.hor_count;
        out.grad[b].x += d;
        out.grad[a].x -= d;
      },
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        const double t = e.y * n.ver_y;
        vsum += std::abs(std::abs(t) - 1.0);
        const double d = sgn(std::abs(t) - 1.0) * sgn(t) * n.ver_y / n.ver_count;
        out.grad[b].y += d;
        out.grad[a].y -= d;
      });
  out.value = hsum / n.hor_count + vsum / n.ver_count;
  return out;
}

GridLoss fold_loss(const ControlGrid& g) {
  const EdgeNorms n = edge_norms(g);
  GridLoss out = zero_loss(g);
  double hsum = 0.0, vsum = 0.0;
  for_each_edge(
      g,
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        if (e.x < 0.0) {
          hsum += -e.x;
          out.grad[b].x -= 1.0 / n.hor_count;
          out.grad[a].x += 1.0 / n.hor_count;
        }
      },
      [&](const Vec2& e, std::size_t a, std::size_t b) {
        if (e.y < 0.0) {
          vsum += -e.y;
          out.grad[b].y -= 1.0 / n.ver_count;
          out.grad[a].y += 1.0 / n.ver_count;
        }
      });
  out.value = hsum / n.hor_count + vsum / n.ver_count;
  return out;
}

GridLoss rectangular_loss(const ControlGrid& g, const LossWeights& w) {
  GridLoss out = zero_loss(g);
  const std::pair<double, GridLoss (*)(const ControlGrid&)> terms[] = {
      {w.gamma1, &shape_loss}, {w.gamma2, &size_loss}, {w.gamma3, &fold_loss}};
  for (const auto& [weight, fn] : terms) {
    if (weight == 0.0) continue;
    const GridLoss t = fn(g);
    out.value += weight * t.value;
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += weight * t.grad[k];
  }
  return out;
}

GridLoss distortion_loss(const ControlGrid& g) {
  const EdgeNorms n = edge_norms(g);
  GridLoss out = zero_loss(g);
  const int rows = g.rows, cols = g.cols;
  const double pairs = rows * std::max(0, cols - 2) + cols * std::max(0, rows - 2);
  if (pairs == 0.0) return out;
  double sum = 0.0;
  // Second difference p[k-1] - 2 p[k] + p[k+1] along a grid line, scaled
  // by the nominal cell size in that direction.
  auto visit = [&](std::size_t a, std::size_t b, std::size_t c, double sx, double sy) {
    const Vec2 d = g.points[a] - 2.0 * g.points[b] + g.points[c];
    const double dx = d.x * sx, dy = d.y * sy;
    sum += dx * dx + dy * dy;
    const Vec2 gd{2.0 * dx * sx / pairs, 2.0 * dy * sy / pairs};
    out.grad[a] += gd;
    out.grad[b] -= 2.0 * gd;
    out.grad[c] += gd;
  };
  for (int i = 0; i < rows; ++i)
    for (int j = 1; j + 1 < cols; ++j) {
      const std::size_t b = static_cast<std::size_t>(i) * cols + j;
      visit(b - 1, b, b + 1, n.hor_x, n.hor_x);
    }
  for (int i = 1; i + 1 < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const std::size_t b = static_cast<std::size_t>(i) * cols + j;
      visit(b - cols, b, b + cols, n.ver_y, n.ver_y);
    }
  out.value = sum / pairs;
  return out;
}

double alignment_loss(const MaskedImage& warped, const MaskedImage& ref,
                      AlignmentGrad* grad) {
  if (warped.width != ref.width || warped.height != ref.height ||
      warped.channels != ref.channels) {
    fail(ErrorKind::InvalidArgument, "alignment_loss: canvas mismatch");
  }
  const std::size_t n = warped.pixel_count();
  const int C = warped.channels;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = warped.mask[i] * ref.mask[i];
    if (w <= 0.0) continue;
    double diff = 0.0;
    for (int c = 0; c < C; ++c) diff += std::abs(warped.pixels[i * C + c] - ref.pixels[i * C + c]);
    num += w * diff / C;
    den += w;
  }
  if (den <= 0.0) {
    if (grad) {
      grad->dvalue.assign(n * C, 0.0);
      grad->dmask.assign(n, 0.0);
    }
    return std::numeric_limits<double>::infinity();
  }
  const double loss = num / den;
  if (grad) {
    grad->dvalue.assign(n * C, 0.0);
    grad->dmask.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double mr = ref.mask[i];
      if (mr <= 0.0) continue;
      const double w = warped.mask[i] * mr;
      double diff = 0.0;
      for (int c = 0; c < C; ++c) {
        const double d = warped.pixels[i * C + c] - ref.pixels[i * C + c];
        diff += std::abs(d);
        if (w > 0.0) grad->dvalue[i * C + c] = w * sgn(d) / (C * den);
      }
      grad->dmask[i] = mr * (diff / C - loss) / den;
    }
  }
  return loss;
}

GridLoss warp_alignment_loss(const MaskedImage& tar, const MaskedImage& ref,
                             const ControlGrid& src, const ControlGrid& dst,
                             const BBox& canvas) {
  validate(src);
  validate(dst);
  if (ref.width != canvas.width() || ref.height != canvas.height()) {
    fail(ErrorKind::InvalidArgument, "warp_alignment_loss: ref must match canvas");
  }
  const ThinPlateSpline tps(dst.points, src.points);
  const auto hull = convex_hull(dst.points);
  const BBox hb = warped_bounds(std::span<const ControlGrid>(&dst, 1));

  MaskedImage warped(ref.width, ref.height, tar.channels);
  struct Active {
    std::size_t index;
    Vec2 p;
    SampleJacobian jac;
  };
  std::vector<Active> active;
  const int ys = std::max(0, hb.y0 - canvas.y0), ye = std::min(ref.height, hb.y1 - canvas.y0);
  const int xs = std::max(0, hb.x0 - canvas.x0), xe = std::min(ref.width, hb.x1 - canvas.x0);
  for (int y = ys; y < ye; ++y)
    for (int x = xs; x < xe; ++x) {
      if (ref.mask_at(x, y) <= 0.0) continue;
      const Vec2 p{canvas.x0 + x + 0.5, canvas.y0 + y + 0.5};
      if (!hull_contains(hull, p)) continue;
      const Vec2 q = tps(p);
      SampleJacobian jac;
      const Sample s = sample_bilinear(tar, q.x, q.y, &jac);
      if (s.mask <= 0.0) continue;
      const std::size_t i = warped.index(x, y);
      warped.mask[i] = s.mask;
      for (int c = 0; c < tar.channels; ++c) warped.pixels[i * tar.channels + c] = s.value[c];
      active.push_back({i, p, jac});
    }

  AlignmentGrad ag;
  GridLoss out;
  out.value = alignment_loss(warped, ref, &ag);
  out.grad.assign(dst.size(), Vec2{});
  if (!std::isfinite(out.value)) return out;

  ThinPlateSpline::Adjoint adj(tps);
  const int C = tar.channels;
  for (const auto& a : active) {
    Vec2 g{ag.dmask[a.index] * a.jac.dmask_dx, ag.dmask[a.index] * a.jac.dmask_dy};
    for (int c = 0; c < C; ++c) {
      g.x += ag.dvalue[a.index * C + c] * a.jac.dvalue_dx[c];
      g.y += ag.dvalue[a.index * C + c] * a.jac.dvalue_dy[c];
    }
    adj.add(a.p, g);
  }
  out.grad = adj.gradient();
  return out;
}

LossReport combine_losses(double alignment, const ControlGrid& g, const LossWeights& w) {
  validate(w);
  LossReport r;
  r.alignment = alignment;
  r.distortion = distortion_loss(g).value;
  r.shape = shape_loss(g).value;
  r.size = size_loss(g).value;
  r.fold = fold_loss(g).value;
  const double rect = w.gamma1 * r.shape + w.gamma2 * r.size + w.gamma3 * r.fold;
  const double align_term = w.alpha == 0.0 ? 0.0 : w.alpha * r.alignment;
  r.total = align_term + w.beta * r.distortion + w.gamma * rect;
  return r;
}

LossReport total_warp_loss(const MaskedImage& warped_tar, const MaskedImage& ref,
                           const ControlGrid& g, const LossWeights& w) {
  return combine_losses(alignment_loss(warped_tar, ref), g, w);
}

}  // namespace svstitch
