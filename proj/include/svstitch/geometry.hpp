#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace svstitch {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend Vec2 operator*(double s, const Vec2& a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(const Vec2& a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2& a, const Vec2& b) = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

// Integer axis-aligned box [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Projective 3x3 transform normalized so m(2,2) == 1 whenever it is nonzero.
struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);

  // Throws DegenerateWarp when the point lands on the w = 0 plane.
  Vec2 map(const Vec2& p) const;
  Homography inverse() const;
  Homography operator*(const Homography& o) const;
  void normalize();

  std::array<double, 9> row_major() const;
  static Homography from_row_major(const std::array<double, 9>& v);
};

// Corners of the [0, W] x [0, H] frame in TL, TR, BL, BR order.
std::array<Vec2, 4> frame_corners(double width, double height);

// Convex hull by monotone chain, counter-clockwise in image coordinates.
std::vector<Vec2> convex_hull(std::vector<Vec2> points);

// Inclusive containment test for a hull produced by convex_hull().
bool hull_contains(const std::vector<Vec2>& hull, const Vec2& p,
                   double tol = 1e-9);

}  // namespace svstitch
