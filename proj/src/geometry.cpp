#include "svstitch/geometry.hpp"

#include <algorithm>

#include <Eigen/LU>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {
constexpr double kPlaneEps = 1e-12;
}

Homography Homography::translation(double tx, double ty) {
  Homography h;
  h.m(0, 2) = tx;
  h.m(1, 2) = ty;
  return h;
}

Vec2 Homography::map(const Vec2& p) const {
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) < kPlaneEps) {
    fail(ErrorKind::DegenerateWarp, "homography maps point to the w = 0 plane");
  }
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

Homography Homography::inverse() const {
  const double det = m.determinant();
  if (std::abs(det) < 1e-12 || !std::isfinite(det)) {
    fail(ErrorKind::DegenerateWarp, "singular homography");
  }
  Homography h;
  h.m = m.inverse();
  h.normalize();
  return h;
}

Homography Homography::operator*(const Homography& o) const {
  Homography h;
  h.m = m * o.m;
  h.normalize();
  return h;
}

void Homography::normalize() {
  if (std::abs(m(2, 2)) > kPlaneEps) m /= m(2, 2);
}

std::array<double, 9> Homography::row_major() const {
  std::array<double, 9> v{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = m(r, c);
  return v;
}

Homography Homography::from_row_major(const std::array<double, 9>& v) {
  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.m(r, c) = v[r * 3 + c];
  return h;
}

std::array<Vec2, 4> frame_corners(double width, double height) {
  return {Vec2{0.0, 0.0}, Vec2{width, 0.0}, Vec2{0.0, height},
          Vec2{width, height}};
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool hull_contains(const std::vector<Vec2>& hull, const Vec2& p, double tol) {
  const std::size_t n = hull.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % n];
    const Vec2 e = b - a;
    if (cross(e, p - a) < -tol * std::max(1.0, norm(e))) return false;
  }
  return true;
}

}  // namespace svstitch
