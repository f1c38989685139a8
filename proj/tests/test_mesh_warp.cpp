#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "svstitch/errors.hpp"
#include "svstitch/mesh_warp.hpp"
#include "test_support.hpp"

using namespace svstitch;

namespace {

FourPtOffsets random_offsets(std::mt19937& rng, double amp, double w, double h) {
  std::uniform_real_distribution<double> d(-amp, amp);
  FourPtOffsets o;
  o.source_width = w;
  o.source_height = h;
  for (auto& v : o.offsets) v = {d(rng), d(rng)};
  return o;
}

double corner_error(const Homography& hm, const FourPtOffsets& o) {
  const auto corners = frame_corners(o.source_width, o.source_height);
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    worst = std::max(worst, norm(hm.map(corners[i]) - (corners[i] + o.offsets[i])));
  }
  return worst;
}

}  // namespace

TEST(FourPt, ZeroOffsetsGiveIdentity) {
  FourPtOffsets o;
  o.source_width = 512;
  o.source_height = 384;
  const auto h = four_pt_to_matrix(o);
  EXPECT_LT((h.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FourPt, EqualOffsetsGiveTranslation) {
  FourPtOffsets o;
  o.source_width = 512;
  o.source_height = 384;
  for (auto& v : o.offsets) v = {13.5, -7.25};
  const auto h = four_pt_to_matrix(o);
  Eigen::Matrix3d t;
  t << 1, 0, 13.5, 0, 1, -7.25, 0, 0, 1;
  EXPECT_LT((h.m - t).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(corner_error(h, o), 1e-9);
}

TEST(FourPt, RandomCornersExact) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto o = random_offsets(rng, 20.0, 512, 384);
    EXPECT_LT(corner_error(four_pt_to_matrix(o), o), 1e-6);
  }
}

TEST(FourPt, MatrixRoundTrip) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto o = random_offsets(rng, 40.0, 300, 200);
    const auto back = matrix_to_four_pt(four_pt_to_matrix(o), 300, 200);
    for (int i = 0; i < 4; ++i) EXPECT_LT(norm(back.offsets[i] - o.offsets[i]), 1e-8);
  }
}

TEST(FourPt, CollinearCornersRejected) {
  FourPtOffsets o;
  o.source_width = 100;
  o.source_height = 100;
  // TL, TR and BR all on the line y = x after displacement.
  o.offsets[0] = {0, 0};
  o.offsets[1] = {-50, 50};
  o.offsets[3] = {0, 0};
  try {
    four_pt_to_matrix(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularConfiguration);
  }
}

// Central differences of the normalized matrix against the analytic Jacobian.
TEST(FourPt, JacobianMatchesFiniteDifferences) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto o = random_offsets(rng, 25.0, 256, 192);
    const auto jac = four_pt_jacobian(o);
    for (int k = 0; k < 8; ++k) {
      const double h = 1e-4;
      auto plus = o, minus = o;
      (k % 2 ? plus.offsets[k / 2].y : plus.offsets[k / 2].x) += h;
      (k % 2 ? minus.offsets[k / 2].y : minus.offsets[k / 2].x) -= h;
      const Eigen::Matrix3d fd =
          (four_pt_to_matrix(plus).m - four_pt_to_matrix(minus).m) / (2 * h);
      EXPECT_LT((fd - jac[k]).norm(), 1e-5 * std::max(1.0, fd.norm())) << k;
    }
  }
}

TEST(Grid, UniformConstruction) {
  const auto g1 = make_uniform_grid(1, 1, 100, 100);
  EXPECT_EQ(g1.at(0, 0), (Vec2{0, 0}));
  EXPECT_EQ(g1.at(0, 1), (Vec2{100, 0}));
  EXPECT_EQ(g1.at(1, 0), (Vec2{0, 100}));
  EXPECT_EQ(g1.at(1, 1), (Vec2{100, 100}));
  EXPECT_EQ(make_uniform_grid(2, 2, 100, 100).at(1, 1), (Vec2{50, 50}));

  const auto g = make_uniform_grid(5, 7, 350, 210);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j + 1 < g.cols; ++j) {
      const Vec2 e = g.at(i, j + 1) - g.at(i, j);
      EXPECT_NEAR(e.x, 50.0, 1e-12);
      EXPECT_EQ(e.y, 0.0);
    }
  EXPECT_THROW(make_uniform_grid(0, 3, 10, 10), Error);
  EXPECT_THROW(make_uniform_grid(3, 0, 10, 10), Error);
}

TEST(Grid, HomographyApplication) {
  const auto g = make_uniform_grid(3, 4, 120, 90);
  const auto same = apply_homography_to_grid(g, Homography::identity());
  EXPECT_EQ(same.points, g.points);
  const auto moved = apply_homography_to_grid(g, Homography::translation(3, -2));
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(moved.points[k].x, g.points[k].x + 3, 1e-12);
    EXPECT_NEAR(moved.points[k].y, g.points[k].y - 2, 1e-12);
  }

  std::mt19937 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto o = random_offsets(rng, 30.0, 200, 150);
    const auto c = apply_homography_to_grid(make_uniform_grid(1, 1, 200, 150),
                                            four_pt_to_matrix(o));
    const auto corners = frame_corners(200, 150);
    const Vec2 got[4] = {c.at(0, 0), c.at(0, 1), c.at(1, 0), c.at(1, 1)};
    for (int i = 0; i < 4; ++i) EXPECT_LT(norm(got[i] - corners[i] - o.offsets[i]), 1e-6);
  }

  Homography h;
  h.m << 1, 0, 0, 0, 1, 0, 0.01, 0, 1;  // w = 0 along x = -100
  ControlGrid bad = g;
  bad.at(0, 0) = {-100, 5};
  try {
    apply_homography_to_grid(bad, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateWarp);
  }
}

TEST(Grid, WarpedBounds) {
  const auto g = make_uniform_grid(4, 4, 80, 60);
  EXPECT_EQ(warped_bounds(std::span(&g, 1)), (BBox{-1, -1, 81, 61}));

  const ControlGrid two[2] = {
      apply_homography_to_grid(g, Homography::translation(-50, 10)),
      apply_homography_to_grid(g, Homography::translation(200, -30))};
  EXPECT_EQ(warped_bounds(two), (BBox{-51, -31, 281, 71}));

  std::mt19937 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = svtest::jitter(g, 17.3, rng);
    const BBox b = warped_bounds(std::span(&r, 1));
    for (const auto& p : r.points) {
      EXPECT_GE(p.x, b.x0 + 1);
      EXPECT_LE(p.x, b.x1 - 1);
      EXPECT_GE(p.y, b.y0 + 1);
      EXPECT_LE(p.y, b.y1 - 1);
    }
  }
}

TEST(Tps, InterpolatesControlPointsAndAffine) {
  std::mt19937 rng(10);
  const auto src = make_uniform_grid(4, 5, 100, 80);
  const auto dst = svtest::jitter(src, 8.0, rng);
  const ThinPlateSpline f(dst.points, src.points);
  for (std::size_t k = 0; k < src.size(); ++k) {
    EXPECT_LT(norm(f(dst.points[k]) - src.points[k]), 1e-8);
  }

  // An affine correspondence is reproduced everywhere, not only at the knots.
  auto affine = [](const Vec2& p) { return Vec2{1.1 * p.x + 0.2 * p.y + 3, -0.1 * p.x + 0.9 * p.y - 4}; };
  std::vector<Vec2> to;
  for (const auto& p : dst.points) to.push_back(affine(p));
  const ThinPlateSpline a(dst.points, to);
  std::uniform_real_distribution<double> ux(-20, 120), uy(-20, 100);
  for (int i = 0; i < 200; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    EXPECT_LT(norm(a(p) - affine(p)), 1e-7);
  }
}

TEST(Tps, CoincidentPointsRejected) {
  auto dst = make_uniform_grid(2, 2, 50, 50);
  dst.at(0, 1) = dst.at(0, 0) + Vec2{1e-11, 0};
  const auto src = make_uniform_grid(2, 2, 50, 50);
  try {
    tps_warp(MaskedImage(50, 50, 1, 0.5, 1.0), src, dst, {0, 0, 50, 50});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateWarp);
  }
}

// Reverse-mode gradient of sum_p <w_p, f(p)> with respect to the `from` points.
TEST(Tps, AdjointMatchesFiniteDifferences) {
  std::mt19937 rng(12);
  const auto src = make_uniform_grid(3, 3, 90, 60);
  std::uniform_real_distribution<double> up(-10, 100), uw(-1, 1);
  std::vector<Vec2> probes, weights;
  for (int i = 0; i < 40; ++i) {
    probes.push_back({up(rng), up(rng) * 0.7});
    weights.push_back({uw(rng), uw(rng)});
  }
  for (int trial = 0; trial < 10; ++trial) {
    const auto dst = svtest::jitter(src, 6.0, rng);
    auto objective = [&](const ControlGrid& d) {
      const ThinPlateSpline f(d.points, src.points);
      double s = 0.0;
      for (std::size_t i = 0; i < probes.size(); ++i) s += dot(weights[i], f(probes[i]));
      return s;
    };
    const ThinPlateSpline f(dst.points, src.points);
    ThinPlateSpline::Adjoint adj(f);
    for (std::size_t i = 0; i < probes.size(); ++i) adj.add(probes[i], weights[i]);
    const auto fd = svtest::numeric_gradient(dst, objective, 1e-5);
    EXPECT_LT(svtest::relative_error(adj.gradient(), fd), 1e-5);
  }
}

TEST(TpsWarp, IdentityReproducesImage) {
  const auto img = svtest::render(svtest::SmoothField(1), 96, 72, 3);
  const auto g = make_uniform_grid(6, 6, 96, 72);
  const BBox canvas{-4, -4, 100, 76};
  const auto out = tps_warp(img, g, g, canvas);
  ASSERT_EQ(out.width, 104);
  ASSERT_EQ(out.height, 80);
  for (int y = 0; y < 72; ++y)
    for (int x = 0; x < 96; ++x) {
      EXPECT_NEAR(out.mask_at(x + 4, y + 4), 1.0, 1e-9);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.at(x + 4, y + 4, c), img.at(x, y, c), 1e-6);
    }
  EXPECT_EQ(out.mask_at(0, 0), 0.0);
  EXPECT_EQ(out.mask_at(103, 79), 0.0);
}

TEST(TpsWarp, TranslationMatchesShiftedResampling) {
  const svtest::SmoothField field(2);
  const auto img = svtest::render(field, 120, 90, 1);
  const auto src = make_uniform_grid(12, 12, 120, 90);
  const Vec2 t{6.3, -2.7};
  const auto dst = apply_homography_to_grid(src, Homography::translation(t.x, t.y));
  const BBox canvas{0, -5, 130, 90};
  const auto out = tps_warp(img, src, dst, canvas);
  double worst = 0.0;
  for (int y = 4; y < 80; ++y)
    for (int x = 12; x < 120; ++x) {
      const double cx = canvas.x0 + x + 0.5 - t.x, cy = canvas.y0 + y + 0.5 - t.y;
      const double direct = sample_bilinear(img, cx, cy).value[0];
      worst = std::max(worst, std::abs(out.at(x, y, 0) - direct));
    }
  EXPECT_LT(worst, 1e-3);
}

// Dense-map oracle: the TPS fitted to a homography-warped grid stays within
// half a pixel of the homography everywhere inside the grid.
TEST(TpsWarp, HomographyGridApproximatesHomography) {
  std::mt19937 rng(13);
  const auto src = make_uniform_grid(12, 12, 240, 180);
  FourPtOffsets o = random_offsets(rng, 15.0, 240, 180);
  const Homography h = four_pt_to_matrix(o);
  const auto dst = apply_homography_to_grid(src, h);
  const ThinPlateSpline inv(dst.points, src.points);
  const Homography hinv = h.inverse();
  const auto hull = convex_hull(dst.points);
  const BBox canvas = warped_bounds(std::span(&dst, 1));
  double worst = 0.0;
  for (int y = canvas.y0; y < canvas.y1; ++y)
    for (int x = canvas.x0; x < canvas.x1; ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      if (!hull_contains(hull, p)) continue;
      worst = std::max(worst, norm(inv(p) - hinv.map(p)));
    }
  EXPECT_LT(worst, 0.5);

  // The same bound seen through the rendered images.
  const auto img = svtest::render(svtest::SmoothField(4, 30, 80), 240, 180, 1);
  const auto a = tps_warp(img, src, dst, canvas);
  const auto b = homography_warp(img, h, canvas);
  int compared = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (a.mask[i] < 1.0 || b.mask[i] < 1.0) continue;
    ++compared;
    EXPECT_NEAR(a.pixels[i], b.pixels[i], 0.5 * 0.09 * 5 * 2 * M_PI / 30);
  }
  EXPECT_GT(compared, 30000);
}

TEST(TpsWarp, AffineGridDenseError) {
  const auto src = make_uniform_grid(6, 6, 120, 90);
  Homography a;
  a.m << 0.95, 0.08, 7, -0.05, 1.04, -3, 0, 0, 1;
  const auto dst = apply_homography_to_grid(src, a);
  const ThinPlateSpline inv(dst.points, src.points);
  const Homography ainv = a.inverse();
  for (double y = 0; y < 90; y += 3.7)
    for (double x = 0; x < 120; x += 3.1) {
      EXPECT_LT(norm(inv({x, y}) - ainv.map({x, y})), 1e-3);
    }
}

TEST(TpsWarp, MaskSupportInsideHull) {
  std::mt19937 rng(14);
  const auto src = make_uniform_grid(5, 5, 100, 100);
  const auto dst = svtest::jitter(src, 9.0, rng);
  const BBox canvas = warped_bounds(std::span(&dst, 1));
  const auto out = tps_warp(MaskedImage(100, 100, 1, 0.3, 1.0), src, dst, canvas);
  const auto hull = convex_hull(dst.points);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      if (out.mask_at(x, y) > 0.0) {
        EXPECT_TRUE(hull_contains(hull, {canvas.x0 + x + 0.5, canvas.y0 + y + 0.5}));
      }
    }
}
