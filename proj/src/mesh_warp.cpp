#include "svstitch/mesh_warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {

// Translate to zero mean and scale to sqrt(2) RMS distance.
Eigen::Matrix3d hartley_normalizer(const std::array<Vec2, 4>& pts) {
  Vec2 mean;
  for (const auto& p : pts) mean += p;
  mean = 0.25 * mean;
  double ms = 0.0;
  for (const auto& p : pts) ms += dot(p - mean, p - mean);
  const double rms = std::sqrt(ms / 4.0);
  const double s = rms > 0.0 ? std::sqrt(2.0) / rms : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = s;
  t(1, 1) = s;
  t(0, 2) = -s * mean.x;
  t(1, 2) = -s * mean.y;
  return t;
}

void require_general_position(const std::array<Vec2, 4>& pts, const char* which) {
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  const double tol = 1e-9 * std::max(1.0, scale * scale);
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      for (int c = b + 1; c < 4; ++c) {
        if (std::abs(cross(pts[b] - pts[a], pts[c] - pts[a])) <= tol) {
          fail(ErrorKind::SingularConfiguration,
               std::string("four-point homography: collinear ") + which + " corners");
        }
      }
}

Vec2 apply(const Eigen::Matrix3d& m, const Vec2& p) {
  const Eigen::Vector3d v = m * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

}  // namespace

void validate(const ControlGrid& g) {
  if (g.rows < 2 || g.cols < 2) {
    fail(ErrorKind::InvalidArgument, "control grid needs at least 2x2 points");
  }
  if (g.points.size() != static_cast<std::size_t>(g.rows) * g.cols) {
    fail(ErrorKind::InvalidArgument, "control grid point count mismatch");
  }
  for (const auto& p : g.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      fail(ErrorKind::InvalidArgument, "control grid has non-finite points");
    }
  }
}

Homography four_pt_to_matrix(const FourPtOffsets& o) {
  const auto src = frame_corners(o.source_width, o.source_height);
  std::array<Vec2, 4> dst;
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(o.offsets[i].x) || !std::isfinite(o.offsets[i].y)) {
      fail(ErrorKind::InvalidArgument, "four-point offsets must be finite");
    }
    dst[i] = src[i] + o.offsets[i];
  }
  require_general_position(src, "source");
  require_general_position(dst, "displaced");
  // Equal offsets are a translation; returning it exactly keeps identity
  // motions bit-exact through the rest of the pipeline.
  if (std::all_of(o.offsets.begin(), o.offsets.end(), [&](const Vec2& v) {
        return v.x == o.offsets[0].x && v.y == o.offsets[0].y;
      }))
    return Homography::translation(o.offsets[0].x, o.offsets[0].y);

  const Eigen::Matrix3d ts = hartley_normalizer(src);
  const Eigen::Matrix3d td = hartley_normalizer(dst);
  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Vec2 s = apply(ts, src[i]);
    const Vec2 d = apply(td, dst[i]);
    a.row(2 * i) << -s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Homography out;
  out.m = td.inverse() * hn * ts;
  if (std::abs(out.m(2, 2)) < 1e-12 || !out.m.allFinite()) {
    fail(ErrorKind::SingularConfiguration, "four-point homography is singular");
  }
  out.normalize();
  if (std::abs(out.m.determinant()) < 1e-12) {
    fail(ErrorKind::SingularConfiguration, "four-point homography is singular");
  }
  return out;
}

FourPtOffsets matrix_to_four_pt(const Homography& h, double width, double height) {
  FourPtOffsets o;
  o.source_width = width;
  o.source_height = height;
  const auto corners = frame_corners(width, height);
  for (int i = 0; i < 4; ++i) o.offsets[i] = h.map(corners[i]) - corners[i];
  return o;
}

std::array<Eigen::Matrix3d, 8> four_pt_jacobian(const FourPtOffsets& o) {
  const Homography hm = four_pt_to_matrix(o);
  const auto src = frame_corners(o.source_width, o.source_height);
  // Same solution as the normalized DLT (four points determine H uniquely),
  // written as A(h) = b with h = first eight entries of H.
  Eigen::Matrix<double, 8, 8> a;
  for (int i = 0; i < 4; ++i) {
    const Vec2 s = src[i];
    const Vec2 d = s + o.offsets[i];
    a.row(2 * i) << s.x, s.y, 1.0, 0.0, 0.0, 0.0, -s.x * d.x, -s.y * d.x;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, s.x, s.y, 1.0, -s.x * d.y, -s.y * d.y;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  std::array<Eigen::Matrix3d, 8> jac;
  for (int k = 0; k < 8; ++k) {
    const int corner = k / 2;
    const Vec2 s = src[corner];
    // d(b - A h)/d(dst coordinate) is nonzero only in row k and equals the
    // projective denominator of that corner.
    const double w = hm.m(2, 0) * s.x + hm.m(2, 1) * s.y + 1.0;
    Eigen::Matrix<double, 8, 1> rhs = Eigen::Matrix<double, 8, 1>::Zero();
    rhs(k) = w;
    const Eigen::Matrix<double, 8, 1> dh = lu.solve(rhs);
    jac[k] << dh(0), dh(1), dh(2), dh(3), dh(4), dh(5), dh(6), dh(7), 0.0;
  }
  return jac;
}

ControlGrid make_uniform_grid(int u, int v, double width, double height) {
  if (u < 1 || v < 1) {
    fail(ErrorKind::InvalidArgument, "grid needs at least one row and column");
  }
  ControlGrid g;
  g.rows = u + 1;
  g.cols = v + 1;
  g.source_width = width;
  g.source_height = height;
  g.points.resize(static_cast<std::size_t>(g.rows) * g.cols);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j)
      g.at(i, j) = {j * width / v, i * height / u};
  return g;
}

ControlGrid apply_homography_to_grid(const ControlGrid& g, const Homography& h) {
  ControlGrid out = g;
  for (auto& p : out.points) p = h.map(p);
  return out;
}

BBox warped_bounds(std::span<const ControlGrid> grids) {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = xmin, xmax = -xmin, ymax = -xmin;
  for (const auto& g : grids)
    for (const auto& p : g.points) {
      xmin = std::min(xmin, p.x);
      ymin = std::min(ymin, p.y);
      xmax = std::max(xmax, p.x);
      ymax = std::max(ymax, p.y);
    }
  if (!std::isfinite(xmin)) return {};
  return {static_cast<int>(std::floor(xmin)) - 1, static_cast<int>(std::floor(ymin)) - 1,
          static_cast<int>(std::ceil(xmax)) + 1, static_cast<int>(std::ceil(ymax)) + 1};
}

// --- thin-plate spline -------------------------------------------------------

namespace {

// r^2 log r written in terms of r^2.
inline double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

// (dU/dr) / r = 2 log r + 1.
inline double tps_kernel_slope(double r2) { return r2 > 0.0 ? std::log(r2) + 1.0 : 0.0; }

}  // namespace

ThinPlateSpline::ThinPlateSpline(std::span<const Vec2> from, std::span<const Vec2> to) {
  const std::size_t n = from.size();
  if (n != to.size() || n < 3) {
    fail(ErrorKind::InvalidArgument, "thin-plate spline needs >= 3 matched points");
  }
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& p : to) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  center_ = {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)};
  scale_ = std::max({0.5 * (xmax - xmin), 0.5 * (ymax - ymin), 1e-9});

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (norm(from[i] - from[j]) <= 1e-9) {
        fail(ErrorKind::DegenerateWarp, "coincident thin-plate control points");
      }

  from_.resize(n);
  for (std::size_t i = 0; i < n; ++i) from_[i] = normalize(from[i]);

  const auto m = static_cast<Eigen::Index>(n + 3);
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2 d = from_[i] - from_[j];
      const double k = tps_kernel(dot(d, d));
      sys(i, j) = k;
      sys(j, i) = k;
    }
    sys(i, n) = sys(n, i) = 1.0;
    sys(i, n + 1) = sys(n + 1, i) = from_[i].x;
    sys(i, n + 2) = sys(n + 2, i) = from_[i].y;
  }
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(m, 2);
  for (std::size_t i = 0; i < n; ++i) {
    rhs(i, 0) = to[i].x;
    rhs(i, 1) = to[i].y;
  }
  lu_.compute(sys);
  coef_ = lu_.solve(rhs);
  if (!coef_.allFinite()) {
    fail(ErrorKind::DegenerateWarp, "thin-plate system is singular");
  }
}

Vec2 ThinPlateSpline::operator()(const Vec2& p) const {
  const Vec2 ph = normalize(p);
  const std::size_t n = from_.size();
  double qx = coef_(n, 0) + coef_(n + 1, 0) * ph.x + coef_(n + 2, 0) * ph.y;
  double qy = coef_(n, 1) + coef_(n + 1, 1) * ph.x + coef_(n + 2, 1) * ph.y;
  const double* cx = coef_.col(0).data();
  const double* cy = coef_.col(1).data();
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = ph.x - from_[k].x;
    const double dy = ph.y - from_[k].y;
    const double u = tps_kernel(dx * dx + dy * dy);
    qx += cx[k] * u;
    qy += cy[k] * u;
  }
  return {qx, qy};
}

ThinPlateSpline::Adjoint::Adjoint(const ThinPlateSpline& tps)
    : tps_(&tps),
      coef_grad_(Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(tps.size() + 3), 2)),
      direct_(tps.size()),
      scratch_(tps.size()) {}

void ThinPlateSpline::Adjoint::add(const Vec2& p, const Vec2& g) {
  if (g.x == 0.0 && g.y == 0.0) return;
  const Vec2 ph = tps_->normalize(p);
  const std::size_t n = tps_->from_.size();
  const auto& c = tps_->coef_;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 d = tps_->from_[k] - ph;
    const double r2 = dot(d, d);
    coef_grad_(k, 0) += tps_kernel(r2) * g.x;
    coef_grad_(k, 1) += tps_kernel(r2) * g.y;
    const double s = (g.x * c(k, 0) + g.y * c(k, 1)) * tps_kernel_slope(r2);
    direct_[k] += s * d;
  }
  coef_grad_(n, 0) += g.x;
  coef_grad_(n, 1) += g.y;
  coef_grad_(n + 1, 0) += ph.x * g.x;
  coef_grad_(n + 1, 1) += ph.x * g.y;
  coef_grad_(n + 2, 0) += ph.y * g.x;
  coef_grad_(n + 2, 1) += ph.y * g.y;
}

std::vector<Vec2> ThinPlateSpline::Adjoint::gradient() const {
  const auto& t = *tps_;
  const std::size_t n = t.from_.size();
  // The system matrix is symmetric, so its transpose solve reuses the LU.
  const Eigen::MatrixX2d lam = t.lu_.solve(coef_grad_);
  const auto& c = t.coef_;
  auto pair_dot = [&](std::size_t i, std::size_t j) {
    return lam(i, 0) * c(j, 0) + lam(i, 1) * c(j, 1);
  };
  std::vector<Vec2> grad(direct_);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == k) continue;
      const Vec2 d = t.from_[k] - t.from_[j];
      const double w = (pair_dot(k, j) + pair_dot(j, k)) * tps_kernel_slope(dot(d, d));
      grad[k] -= w * d;
    }
    grad[k].x -= pair_dot(k, n + 1) + pair_dot(n + 1, k);
    grad[k].y -= pair_dot(k, n + 2) + pair_dot(n + 2, k);
  }
  const double inv_scale = 1.0 / t.scale_;
  for (auto& v : grad) v = inv_scale * v;
  return grad;
}

MaskedImage tps_warp(const MaskedImage& img, const ControlGrid& src,
                     const ControlGrid& dst, const BBox& canvas) {
  validate(src);
  validate(dst);
  if (src.rows != dst.rows || src.cols != dst.cols) {
    fail(ErrorKind::InvalidArgument, "tps_warp: grid dimensions differ");
  }
  const ThinPlateSpline tps(dst.points, src.points);
  const auto hull = convex_hull(dst.points);
  MaskedImage out(std::max(0, canvas.width()), std::max(0, canvas.height()),
                  img.channels);
  const BBox hb = warped_bounds(std::span<const ControlGrid>(&dst, 1));
  const int ys = std::max(0, hb.y0 - canvas.y0);
  const int ye = std::min(out.height, hb.y1 - canvas.y0);
  const int xs = std::max(0, hb.x0 - canvas.x0);
  const int xe = std::min(out.width, hb.x1 - canvas.x0);
  for (int y = ys; y < ye; ++y) {
    for (int x = xs; x < xe; ++x) {
      const Vec2 p{canvas.x0 + x + 0.5, canvas.y0 + y + 0.5};
      if (!hull_contains(hull, p)) continue;
      const Vec2 q = tps(p);
      const Sample s = sample_bilinear(img, q.x, q.y);
      if (s.mask <= 0.0) continue;
      out.mask_at(x, y) = s.mask;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = s.value[c];
    }
  }
  return out;
}

MaskedImage homography_warp(const MaskedImage& img, const Homography& h,
                            const BBox& canvas) {
  const Homography inv = h.inverse();
  MaskedImage out(std::max(0, canvas.width()), std::max(0, canvas.height()),
                  img.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Eigen::Vector3d v =
          inv.m * Eigen::Vector3d(canvas.x0 + x + 0.5, canvas.y0 + y + 0.5, 1.0);
      if (v.z() <= 1e-12) continue;
      const Sample s = sample_bilinear(img, v.x() / v.z(), v.y() / v.z());
      if (s.mask <= 0.0) continue;
      out.mask_at(x, y) = s.mask;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = s.value[c];
    }
  }
  return out;
}

}  // namespace svstitch
