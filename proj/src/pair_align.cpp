#include "svstitch/pair_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "svstitch/errors.hpp"
#include "svstitch/optimize.hpp"

namespace svstitch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool fold_guard_active(const LossWeights& w) { return w.gamma > 0.0 && w.gamma3 > 0.0; }

// beta * distortion + gamma * rectangular, with gradient.
GridLoss grid_terms(const ControlGrid& g, const LossWeights& w) {
  GridLoss out{0.0, std::vector<Vec2>(g.size())};
  if (w.beta > 0.0) {
    const auto d = distortion_loss(g);
    out.value += w.beta * d.value;
    for (std::size_t k = 0; k < g.size(); ++k) out.grad[k] += w.beta * d.grad[k];
  }
  if (w.gamma > 0.0) {
    const auto r = rectangular_loss(g, w);
    out.value += w.gamma * r.value;
    for (std::size_t k = 0; k < g.size(); ++k) out.grad[k] += w.gamma * r.grad[k];
  }
  return out;
}

double weighted_alignment(double alignment, const LossWeights& w) {
  return w.alpha == 0.0 ? 0.0 : w.alpha * alignment;
}

FourPtOffsets offsets_from(const Eigen::VectorXd& x, double width, double height) {
  FourPtOffsets o;
  o.source_width = width;
  o.source_height = height;
  for (int i = 0; i < 4; ++i) o.offsets[i] = {x[2 * i], x[2 * i + 1]};
  return o;
}

Eigen::VectorXd to_vector(const FourPtOffsets& o) {
  Eigen::VectorXd x(8);
  for (int i = 0; i < 4; ++i) {
    x[2 * i] = o.offsets[i].x;
    x[2 * i + 1] = o.offsets[i].y;
  }
  return x;
}

ControlGrid add_residual(const ControlGrid& g, const std::vector<Vec2>& r) {
  ControlGrid out = g;
  for (std::size_t k = 0; k < out.size(); ++k) out.points[k] += r[k];
  return out;
}

std::vector<Vec2> residual_from(const Eigen::VectorXd& x) {
  std::vector<Vec2> r(x.size() / 2);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = {x[2 * k], x[2 * k + 1]};
  return r;
}

// Mean absolute difference of tar shifted by (tx, ty) level pixels against
// ref; kInf when the overlap weight is below min_weight.
double shift_score(const MaskedImage& ref, const MaskedImage& tar, int tx, int ty,
                   double min_weight) {
  const int C = ref.channels;
  const int x0 = std::max(0, tx), x1 = std::min(ref.width, tar.width + tx);
  const int y0 = std::max(0, ty), y1 = std::min(ref.height, tar.height + ty);
  double num = 0.0, den = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double w = ref.mask_at(x, y) * tar.mask_at(x - tx, y - ty);
      if (w <= 0.0) continue;
      const double* a = &ref.pixels[ref.index(x, y) * C];
      const double* b = &tar.pixels[tar.index(x - tx, y - ty) * C];
      double d = 0.0;
      for (int c = 0; c < C; ++c) d += std::abs(a[c] - b[c]);
      num += w * d / C;
      den += w;
    }
  if (den <= 0.0 || den < min_weight) return kInf;
  return num / den;
}

// Cholesky factor L (M = L L^T) of the mean squared pixel displacement per
// unit change of the corner offsets, taken over tar pixels that land on
// valid ref pixels. Gradient descent in y = L^T x moves every overlap pixel
// at a comparable rate, even when the overlap pins down only a few corners.
Eigen::Matrix<double, 8, 8> displacement_metric(const MaskedImage& ref, const MaskedImage& tar,
                                                const FourPtOffsets& o) {
  const Homography hm = four_pt_to_matrix(o);
  const auto dH = four_pt_jacobian(o);
  Eigen::Matrix<double, 8, 8> m = Eigen::Matrix<double, 8, 8>::Zero();
  int count = 0;
  const int step = std::max(2, std::min(tar.width, tar.height) / 64);
  for (int y = step / 2; y < tar.height; y += step)
    for (int x = step / 2; x < tar.width; x += step) {
      if (tar.mask_at(x, y) <= 0.0) continue;
      const Eigen::Vector3d s(x + 0.5, y + 0.5, 1.0);
      const Eigen::Vector3d h = hm.m * s;
      if (!(h.z() > 1e-12)) continue;
      const double u = h.x() / h.z(), v = h.y() / h.z();
      const int ix = static_cast<int>(std::floor(u)), iy = static_cast<int>(std::floor(v));
      if (ix < 0 || iy < 0 || ix >= ref.width || iy >= ref.height || ref.mask_at(ix, iy) <= 0.0) continue;
      Eigen::Matrix<double, 2, 8> j;
      for (int k = 0; k < 8; ++k) {
        const Eigen::Vector3d d = dH[k] * s;
        j(0, k) = (d.x() - u * d.z()) / h.z();
        j(1, k) = (d.y() - v * d.z()) / h.z();
      }
      m += j.transpose() * j;
      ++count;
    }
  if (count == 0) return Eigen::Matrix<double, 8, 8>::Identity();
  m /= count;
  // A small ridge keeps the unobserved directions bounded.
  m += 1e-4 * (m.trace() / 8.0 + 1e-12) * Eigen::Matrix<double, 8, 8>::Identity();
  Eigen::LLT<Eigen::Matrix<double, 8, 8>> llt(m);
  if (llt.info() != Eigen::Success) return Eigen::Matrix<double, 8, 8>::Identity();
  return llt.matrixL();
}

// Pearson correlation of the pixel values where both masks are full, pooled
// over channels. NaN when fewer than 16 such pixels or no variance.
double overlap_correlation(const MaskedImage& a, const MaskedImage& b) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (a.mask[i] < 0.999 || b.mask[i] < 0.999) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double x = a.pixels[i * a.channels + c], y = b.pixels[i * b.channels + c];
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
      ++n;
    }
  }
  if (n < 16) return std::numeric_limits<double>::quiet_NaN();
  const double k = 1.0 / static_cast<double>(n);
  const double va = saa - sa * sa * k, vb = sbb - sb * sb * k;
  if (!(va > 0.0) || !(vb > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (sab - sa * sb * k) / std::sqrt(va * vb);
}

}  // namespace

void validate(const AlignConfig& cfg) {
  if (cfg.grid_u < 1 || cfg.grid_v < 1) fail(ErrorKind::InvalidConfig, "grid_u and grid_v must be >= 1");
  if (cfg.pyramid_scales.empty()) fail(ErrorKind::InvalidConfig, "pyramid_scales is empty");
  for (std::size_t i = 0; i < cfg.pyramid_scales.size(); ++i) {
    const double s = cfg.pyramid_scales[i];
    if (!(s > 0.0 && s <= 1.0)) fail(ErrorKind::InvalidConfig, "pyramid scales must lie in (0, 1]");
    if (i > 0 && !(s > cfg.pyramid_scales[i - 1])) {
      fail(ErrorKind::InvalidConfig, "pyramid scales must be strictly increasing");
    }
    try {
      scale_factor(s);
    } catch (const Error& e) {
      fail(ErrorKind::InvalidConfig, e.what());
    }
  }
  if (cfg.homography_levels < 1 ||
      cfg.homography_levels > static_cast<int>(cfg.pyramid_scales.size())) {
    fail(ErrorKind::InvalidConfig, "homography_levels must be in [1, number of scales]");
  }
  if (cfg.mesh_levels < 0 || cfg.mesh_levels > static_cast<int>(cfg.pyramid_scales.size())) {
    fail(ErrorKind::InvalidConfig, "mesh_levels must be in [0, number of scales]");
  }
  if (cfg.max_iters_homography < 1 || cfg.max_iters_mesh < 1) {
    fail(ErrorKind::InvalidConfig, "iteration counts must be >= 1");
  }
  if (!(cfg.max_step_homography > 0.0) || !(cfg.max_step_mesh > 0.0) || !(cfg.tol >= 0.0)) {
    fail(ErrorKind::InvalidConfig, "step sizes must be > 0 and tol >= 0");
  }
  if (!(cfg.seed_scale > 0.0 && cfg.seed_scale <= 1.0)) {
    fail(ErrorKind::InvalidConfig, "seed_scale must lie in (0, 1]");
  }
  if (cfg.direction_hint < -1 || cfg.direction_hint > 1) {
    fail(ErrorKind::InvalidConfig, "direction_hint must be -1, 0 or 1");
  }
  if (!(cfg.min_overlap_fraction >= 0.0 && cfg.min_overlap_fraction < 1.0) ||
      !(cfg.min_match_ratio > 0.0) ||
      !(cfg.min_overlap_correlation >= -1.0 && cfg.min_overlap_correlation <= 1.0)) {
    fail(ErrorKind::InvalidConfig, "bad overlap thresholds");
  }
  validate(cfg.weights);
}

int scale_factor(double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "scale must lie in (0, 1]");
  }
  const double inv = 1.0 / scale;
  const int k = static_cast<int>(std::lround(inv));
  if (std::abs(inv - k) > 1e-6 * inv) {
    fail(ErrorKind::InvalidArgument, "scale " + std::to_string(scale) + " is not 1/k");
  }
  return k;
}

MaskedImage downsample(const MaskedImage& img, int factor) {
  if (factor < 1) fail(ErrorKind::InvalidArgument, "downsample factor must be >= 1");
  if (factor == 1) return img;
  const int w = img.width / factor, h = img.height / factor;
  if (w < 1 || h < 1) {
    fail(ErrorKind::InvalidArgument, "downsampling " + std::to_string(img.width) + "x" +
                                         std::to_string(img.height) + " by " +
                                         std::to_string(factor) + " leaves no pixels");
  }
  const int C = img.channels;
  MaskedImage out(w, h, C);
  const double area = static_cast<double>(factor) * factor;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = 0.0, v[3] = {0, 0, 0};
      for (int yy = y * factor; yy < (y + 1) * factor; ++yy)
        for (int xx = x * factor; xx < (x + 1) * factor; ++xx) {
          const double mk = img.mask_at(xx, yy);
          m += mk;
          for (int c = 0; c < C; ++c) v[c] += mk * img.at(xx, yy, c);
        }
      out.mask_at(x, y) = m / area;
      if (m > 0.0)
        for (int c = 0; c < C; ++c) out.at(x, y, c) = v[c] / m;
    }
  return out;
}

std::vector<MaskedImage> build_pyramid(const MaskedImage& img, const std::vector<double>& scales) {
  std::vector<MaskedImage> out;
  out.reserve(scales.size());
  for (double s : scales) out.push_back(downsample(img, scale_factor(s)));
  return out;
}

PairMotion identity_motion(int grid_u, int grid_v, double width, double height) {
  PairMotion m;
  m.h_offsets.source_width = width;
  m.h_offsets.source_height = height;
  m.rows = grid_u + 1;
  m.cols = grid_v + 1;
  m.residual.assign(static_cast<std::size_t>(m.rows) * m.cols, Vec2{});
  return m;
}

ControlGrid motion_source_grid(const PairMotion& m) {
  return make_uniform_grid(m.rows - 1, m.cols - 1, m.h_offsets.source_width,
                           m.h_offsets.source_height);
}

ControlGrid motion_destination_grid(const PairMotion& m) {
  if (m.residual.size() != static_cast<std::size_t>(m.rows) * m.cols) {
    fail(ErrorKind::InvalidArgument, "motion residual does not match its grid size");
  }
  const auto h = apply_homography_to_grid(motion_source_grid(m), four_pt_to_matrix(m.h_offsets));
  return add_residual(h, m.residual);
}

double homography_stage_loss(const MaskedImage& ref, const MaskedImage& tar, int factor,
                             const FourPtOffsets& offsets, int grid_u, int grid_v,
                             const LossWeights& w, Eigen::VectorXd* grad) {
  if (grad) grad->setZero(8);
  Homography hm;
  ControlGrid grid;
  try {
    hm = four_pt_to_matrix(offsets);
    grid = apply_homography_to_grid(
        make_uniform_grid(grid_u, grid_v, offsets.source_width, offsets.source_height), hm);
  } catch (const Error&) {
    return kInf;
  }

  Eigen::Matrix3d S = Eigen::Matrix3d::Identity(), S_inv = Eigen::Matrix3d::Identity();
  S(0, 0) = S(1, 1) = 1.0 / factor;
  S_inv(0, 0) = S_inv(1, 1) = factor;
  const Eigen::Matrix3d Hs = S * hm.m * S_inv;
  if (!(std::abs(Hs.determinant()) > 1e-300)) return kInf;
  const Eigen::Matrix3d G = Hs.inverse();

  // Per-pixel homography sampling of tar on the ref canvas.
  const int C = tar.channels;
  MaskedImage warped(ref.width, ref.height, C);
  struct Active {
    std::size_t index;
    Eigen::Vector3d p;
    Vec2 q;
    double w;
    SampleJacobian jac;
  };
  std::vector<Active> active;
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      if (ref.mask_at(x, y) <= 0.0) continue;
      const Eigen::Vector3d p(x + 0.5, y + 0.5, 1.0);
      const Eigen::Vector3d h = G * p;
      if (!(h.z() > 1e-12)) continue;
      const Vec2 q{h.x() / h.z(), h.y() / h.z()};
      SampleJacobian jac;
      const Sample s = sample_bilinear(tar, q.x, q.y, grad ? &jac : nullptr);
      if (s.mask <= 0.0) continue;
      const std::size_t i = warped.index(x, y);
      warped.mask[i] = s.mask;
      for (int c = 0; c < C; ++c) warped.pixels[i * C + c] = s.value[c];
      if (grad) active.push_back({i, p, q, h.z(), jac});
    }

  AlignmentGrad ag;
  const double alignment = alignment_loss(warped, ref, grad ? &ag : nullptr);
  if (!std::isfinite(alignment)) return kInf;
  const GridLoss gt = grid_terms(grid, w);
  const double total = weighted_alignment(alignment, w) + gt.value;
  if (!grad) return total;

  const auto dH = four_pt_jacobian(offsets);

  // d(alignment)/d(G), then through G = Hs^-1 and Hs = S H S^-1.
  if (w.alpha != 0.0) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    for (const auto& a : active) {
      double gx = ag.dmask[a.index] * a.jac.dmask_dx;
      double gy = ag.dmask[a.index] * a.jac.dmask_dy;
      for (int c = 0; c < C; ++c) {
        gx += ag.dvalue[a.index * C + c] * a.jac.dvalue_dx[c];
        gy += ag.dvalue[a.index * C + c] * a.jac.dvalue_dy[c];
      }
      const Eigen::Vector3d row(gx / a.w, gy / a.w, -(gx * a.q.x + gy * a.q.y) / a.w);
      A += row * a.p.transpose();
    }
    for (int k = 0; k < 8; ++k) {
      const Eigen::Matrix3d dG = -G * (S * dH[k] * S_inv) * G;
      (*grad)[k] += w.alpha * (A.cwiseProduct(dG)).sum();
    }
  }

  // Grid terms through the projective map of each uniform grid point.
  const auto uniform = make_uniform_grid(grid_u, grid_v, offsets.source_width, offsets.source_height);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec2& g = gt.grad[n];
    if (g.x == 0.0 && g.y == 0.0) continue;
    const Eigen::Vector3d u(uniform.points[n].x, uniform.points[n].y, 1.0);
    const double wz = hm.m.row(2).dot(u);
    const Vec2& q = grid.points[n];
    for (int k = 0; k < 8; ++k) {
      const double d2 = dH[k].row(2).dot(u);
      const double dx = (dH[k].row(0).dot(u) - q.x * d2) / wz;
      const double dy = (dH[k].row(1).dot(u) - q.y * d2) / wz;
      (*grad)[k] += g.x * dx + g.y * dy;
    }
  }
  return total;
}

double mesh_stage_loss(const MaskedImage& ref, const MaskedImage& tar, int factor,
                       const ControlGrid& homography_grid, const std::vector<Vec2>& residual,
                       const LossWeights& w, std::vector<Vec2>* grad) {
  const ControlGrid dst = add_residual(homography_grid, residual);
  if (grad) grad->assign(dst.size(), Vec2{});
  const double inv = 1.0 / factor;
  ControlGrid src_level = make_uniform_grid(dst.rows - 1, dst.cols - 1,
                                            dst.source_width * inv, dst.source_height * inv);
  ControlGrid dst_level = dst;
  for (auto& p : dst_level.points) p = inv * p;
  dst_level.source_width *= inv;
  dst_level.source_height *= inv;

  GridLoss align;
  try {
    if (w.alpha != 0.0) {
      align = warp_alignment_loss(tar, ref, src_level, dst_level, {0, 0, ref.width, ref.height});
    } else {
      align = {0.0, std::vector<Vec2>(dst.size())};
    }
  } catch (const Error&) {
    return kInf;
  }
  if (!std::isfinite(align.value)) return kInf;
  const GridLoss gt = grid_terms(dst, w);
  if (grad) {
    for (std::size_t k = 0; k < dst.size(); ++k) {
      (*grad)[k] = (w.alpha * inv) * align.grad[k] + gt.grad[k];
    }
  }
  return weighted_alignment(align.value, w) + gt.value;
}

Vec2 seed_translation(const MaskedImage& ref, const MaskedImage& tar, const AlignConfig& cfg) {
  const int seed_factor = scale_factor(cfg.seed_scale);
  const MaskedImage r = downsample(ref, seed_factor), t = downsample(tar, seed_factor);
  const double min_weight = cfg.min_overlap_fraction * r.width * r.height;

  const int x_lo = cfg.direction_hint > 0 ? 0 : -(t.width - 1);
  const int x_hi = cfg.direction_hint < 0 ? 0 : r.width - 1;
  const int y_span = std::max(1, r.height / 4);
  double best = kInf;
  int bx = 0, by = 0;
  std::vector<double> scores;
  for (int ty = -y_span; ty <= y_span; ++ty)
    for (int tx = x_lo; tx <= x_hi; ++tx) {
      const double s = shift_score(r, t, tx, ty, min_weight);
      if (!std::isfinite(s)) continue;
      scores.push_back(s);
      if (s < best) {
        best = s;
        bx = tx;
        by = ty;
      }
    }
  if (scores.empty()) fail(ErrorKind::NoOverlap, "no shift leaves enough overlap");
  auto mid = scores.begin() + scores.size() / 2;
  std::nth_element(scores.begin(), mid, scores.end());
  if (best > cfg.min_match_ratio * *mid) {
    fail(ErrorKind::NoOverlap, "no translation matches the images (best score " +
                                   std::to_string(best) + ", median " + std::to_string(*mid) + ")");
  }

  // Local refinement on finer levels, down to the finest pyramid scale.
  int factor = seed_factor;
  std::vector<int> refine;
  for (auto it = cfg.pyramid_scales.rbegin(); it != cfg.pyramid_scales.rend(); ++it) {
    const int f = scale_factor(*it);
    if (f < seed_factor) refine.push_back(f);
  }
  std::sort(refine.begin(), refine.end(), std::greater<int>());
  for (int f : refine) {
    const MaskedImage rl = downsample(ref, f), tl = downsample(tar, f);
    const int cx = static_cast<int>(std::lround(static_cast<double>(bx) * factor / f));
    const int cy = static_cast<int>(std::lround(static_cast<double>(by) * factor / f));
    double lbest = kInf;
    int lx = cx, ly = cy;
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        const double s = shift_score(rl, tl, cx + dx, cy + dy, 0.0);
        if (s < lbest) {
          lbest = s;
          lx = cx + dx;
          ly = cy + dy;
        }
      }
    bx = lx;
    by = ly;
    factor = f;
  }
  return {static_cast<double>(bx) * factor, static_cast<double>(by) * factor};
}

PairMotion estimate_pair_motion(const MaskedImage& ref, const MaskedImage& tar,
                                const AlignConfig& cfg) {
  validate(cfg);
  validate(ref);
  validate(tar);
  if (ref.width != tar.width || ref.height != tar.height || ref.channels != tar.channels) {
    fail(ErrorKind::InvalidArgument, "estimate_pair_motion: ref and tar must share dimensions");
  }
  const auto ref_levels = build_pyramid(ref, cfg.pyramid_scales);
  const auto tar_levels = build_pyramid(tar, cfg.pyramid_scales);
  const int n_levels = static_cast<int>(cfg.pyramid_scales.size());
  const LossWeights& w = cfg.weights;
  const bool guard = fold_guard_active(w);

  PairMotion motion = identity_motion(cfg.grid_u, cfg.grid_v, tar.width, tar.height);
  if (cfg.seed_translation) {
    const Vec2 t = seed_translation(ref, tar, cfg);
    for (auto& o : motion.h_offsets.offsets) o = t;
  }
  const auto uniform = make_uniform_grid(cfg.grid_u, cfg.grid_v, tar.width, tar.height);

  auto check_start = [&](double value, int level, const char* stage) {
    if (std::isnan(value)) {
      fail(ErrorKind::OptimizationFailed, std::string(stage) + " objective is NaN at scale 1/" +
                                              std::to_string(scale_factor(cfg.pyramid_scales[level])));
    }
    if (!std::isfinite(value)) {
      fail(ErrorKind::NoOverlap, std::string(stage) + ": warped images do not overlap at scale 1/" +
                                     std::to_string(scale_factor(cfg.pyramid_scales[level])));
    }
  };

  // Homography stage over the 8 corner offsets.
  for (int level = 0; level < cfg.homography_levels; ++level) {
    const int f = scale_factor(cfg.pyramid_scales[level]);
    const double W = tar.width, H = tar.height;
    Objective obj = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      return homography_stage_loss(ref_levels[level], tar_levels[level], f, offsets_from(x, W, H),
                                   cfg.grid_u, cfg.grid_v, w, g);
    };
    const Eigen::VectorXd x0 = to_vector(motion.h_offsets);
    double fold0 = 0.0;
    if (guard) {
      fold0 = fold_loss(apply_homography_to_grid(uniform, four_pt_to_matrix(motion.h_offsets))).value;
    }
    Admissible admissible;
    if (guard) {
      admissible = [&](const Eigen::VectorXd& x) {
        try {
          const auto g = apply_homography_to_grid(uniform, four_pt_to_matrix(offsets_from(x, W, H)));
          return fold_loss(g).value <= fold0;
        } catch (const Error&) {
          return false;
        }
      };
    }
    DescentOptions opt;
    opt.max_iters = cfg.max_iters_homography;
    opt.rel_tol = cfg.tol;
    opt.max_step = cfg.max_step_homography * f;
    check_start(obj(x0, nullptr), level, "homography stage");

    // Translation first: it leaves every grid term unchanged, so this
    // sub-problem is free of the kinks that the shape and size terms have
    // at an axis-aligned grid.
    Objective shift = [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
      Eigen::VectorXd x = x0, full;
      for (int i = 0; i < 4; ++i) x.segment<2>(2 * i) += t;
      const double v = obj(x, g ? &full : nullptr);
      if (g) {
        g->setZero(2);
        for (int i = 0; i < 4; ++i) *g += full.segment<2>(2 * i);
      }
      return v;
    };
    const auto moved = minimize(shift, Eigen::VectorXd::Zero(2), opt);
    Eigen::VectorXd x1 = x0;
    for (int i = 0; i < 4; ++i) x1.segment<2>(2 * i) += moved.x;

    // Full 8-parameter descent in whitened coordinates x = x1 + L^-T y.
    const Eigen::Matrix<double, 8, 8> L = displacement_metric(ref, tar, offsets_from(x1, W, H));
    const auto lt = L.transpose().triangularView<Eigen::Upper>();
    const auto to_x = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      return x1 + lt.solve(Eigen::VectorXd(y));
    };
    Objective whitened = [&](const Eigen::VectorXd& y, Eigen::VectorXd* g) {
      Eigen::VectorXd gx;
      const double v = obj(to_x(y), g ? &gx : nullptr);
      if (g) *g = L.triangularView<Eigen::Lower>().solve(gx);
      return v;
    };
    Admissible admissible_y;
    if (admissible) admissible_y = [&](const Eigen::VectorXd& y) { return admissible(to_x(y)); };
    const auto res = minimize(whitened, Eigen::VectorXd::Zero(8), opt, admissible_y);
    if (!std::isfinite(res.value)) fail(ErrorKind::OptimizationFailed, "homography stage diverged");
    motion.h_offsets = offsets_from(to_x(res.x), W, H);
  }

  // Mesh stage over the residual displacements.
  const ControlGrid hgrid = apply_homography_to_grid(uniform, four_pt_to_matrix(motion.h_offsets));
  const double fold0 = guard ? fold_loss(hgrid).value : 0.0;
  for (int level = n_levels - cfg.mesh_levels; level < n_levels; ++level) {
    const int f = scale_factor(cfg.pyramid_scales[level]);
    Objective obj = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      std::vector<Vec2> gv;
      const double v = mesh_stage_loss(ref_levels[level], tar_levels[level], f, hgrid,
                                       residual_from(x), w, g ? &gv : nullptr);
      if (g) {
        g->resize(x.size());
        for (std::size_t k = 0; k < gv.size(); ++k) {
          (*g)[2 * k] = gv[k].x;
          (*g)[2 * k + 1] = gv[k].y;
        }
      }
      return v;
    };
    Admissible admissible;
    if (guard) {
      admissible = [&](const Eigen::VectorXd& x) {
        return fold_loss(add_residual(hgrid, residual_from(x))).value <= fold0;
      };
    }
    Eigen::VectorXd x0(2 * motion.residual.size());
    for (std::size_t k = 0; k < motion.residual.size(); ++k) {
      x0[2 * k] = motion.residual[k].x;
      x0[2 * k + 1] = motion.residual[k].y;
    }
    DescentOptions opt;
    opt.max_iters = cfg.max_iters_mesh;
    opt.rel_tol = cfg.tol;
    opt.max_step = cfg.max_step_mesh * f;
    check_start(obj(x0, nullptr), level, "mesh stage");
    const auto res = minimize(obj, x0, opt, admissible);
    if (!std::isfinite(res.value)) fail(ErrorKind::OptimizationFailed, "mesh stage diverged");
    motion.residual = residual_from(res.x);
  }

  // Report the objective terms at the finest level.
  const int last = n_levels - 1;
  const int f = scale_factor(cfg.pyramid_scales[last]);
  const ControlGrid dst = add_residual(hgrid, motion.residual);
  double alignment;
  if (cfg.mesh_levels == 0) {
    LossWeights only_align;
    only_align.beta = only_align.gamma = 0.0;
    alignment = homography_stage_loss(ref_levels[last], tar_levels[last], f, motion.h_offsets,
                                      cfg.grid_u, cfg.grid_v, only_align);
  } else {
    ControlGrid src_level = make_uniform_grid(cfg.grid_u, cfg.grid_v, tar.width / double(f),
                                              tar.height / double(f));
    ControlGrid dst_level = dst;
    for (auto& p : dst_level.points) p = (1.0 / f) * p;
    alignment = warp_alignment_loss(tar_levels[last], ref_levels[last], src_level, dst_level,
                                    {0, 0, ref_levels[last].width, ref_levels[last].height})
                    .value;
  }
  motion.report = combine_losses(alignment, dst, w);

  // A spurious match between unrelated images leaves an uncorrelated overlap.
  if (cfg.min_overlap_correlation > -1.0) {
    ControlGrid src_level = make_uniform_grid(cfg.grid_u, cfg.grid_v, tar.width / double(f),
                                              tar.height / double(f));
    ControlGrid dst_level = dst;
    for (auto& p : dst_level.points) p = (1.0 / f) * p;
    const MaskedImage& r = ref_levels[last];
    const MaskedImage warped = tps_warp(tar_levels[last], src_level, dst_level, {0, 0, r.width, r.height});
    const double c = overlap_correlation(r, warped);
    if (!(c >= cfg.min_overlap_correlation))
      fail(ErrorKind::NoOverlap, "aligned overlap does not match (correlation " + std::to_string(c) + ")");
  }
  return motion;
}

MaskedImage warp_pair(const MaskedImage& tar, const PairMotion& motion, const BBox& canvas) {
  return tps_warp(tar, motion_source_grid(motion), motion_destination_grid(motion), canvas);
}

}  // namespace svstitch
