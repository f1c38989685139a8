#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "svstitch/errors.hpp"
#include "svstitch/losses.hpp"
#include "test_support.hpp"

using namespace svstitch;
using svtest::jitter;
using svtest::numeric_gradient;
using svtest::relative_error;

namespace {

ControlGrid shear_grid() {
  ControlGrid g = make_uniform_grid(1, 1, 100, 100);
  g.at(0, 1).y += 10;
  g.at(1, 1).y += 10;
  return g;
}

// Smallest distance of any edge quantity to a kink of the rectangular
// losses; draws closer than this to a kink are resampled.
double kink_distance(const ControlGrid& g) {
  double d = 1e300;
  const double sx_h = g.grid_v() / g.source_width, sy_v = g.grid_u() / g.source_height;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j + 1 < g.cols; ++j) {
      const Vec2 e = g.at(i, j + 1) - g.at(i, j);
      d = std::min({d, std::abs(e.x), std::abs(e.y), std::abs(std::abs(e.x * sx_h) - 1) / sx_h});
    }
  for (int i = 0; i + 1 < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const Vec2 e = g.at(i + 1, j) - g.at(i, j);
      d = std::min({d, std::abs(e.x), std::abs(e.y), std::abs(std::abs(e.y * sy_v) - 1) / sy_v});
    }
  return d;
}

// Random grids of assorted sizes, including folded ones, kept away from kinks.
std::vector<ControlGrid> random_grids(unsigned seed, int count, double max_amp = 40.0) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_real_distribution<double> amp(1.0, max_amp);
  std::vector<ControlGrid> out;
  while (static_cast<int>(out.size()) < count) {
    auto g = jitter(make_uniform_grid(dim(rng), dim(rng), 160, 120), amp(rng), rng);
    if (kink_distance(g) < 1e-2) continue;
    out.push_back(std::move(g));
  }
  return out;
}

void check_gradient(const std::function<GridLoss(const ControlGrid&)>& loss, unsigned seed,
                    double max_amp = 40.0) {
  int nonzero = 0;
  for (const auto& g : random_grids(seed, 100, max_amp)) {
    const auto analytic = loss(g);
    const auto fd = numeric_gradient(g, [&](const ControlGrid& p) { return loss(p).value; });
    double mag = 0.0;
    for (const auto& v : fd) mag += dot(v, v);
    if (mag == 0.0) {
      for (const auto& v : analytic.grad) EXPECT_EQ(norm(v), 0.0);
      continue;
    }
    ++nonzero;
    EXPECT_LT(relative_error(analytic.grad, fd), 1e-4);
  }
  EXPECT_GT(nonzero, 50);
}

}  // namespace

TEST(Shape, UniformIsZero) { EXPECT_EQ(shape_loss(make_uniform_grid(4, 6, 300, 200)).value, 0.0); }

TEST(Shape, ShearExample) { EXPECT_NEAR(shape_loss(shear_grid()).value, 0.1, 1e-9); }

TEST(Shape, Gradient) { check_gradient(shape_loss, 21); }

TEST(Size, UniformIsZero) { EXPECT_NEAR(size_loss(make_uniform_grid(4, 6, 300, 200)).value, 0.0, 1e-12); }

TEST(Size, DoubledGridExample) {
  auto g = make_uniform_grid(3, 4, 200, 150);
  for (auto& p : g.points) p = 2.0 * p;
  EXPECT_NEAR(size_loss(g).value, 2.0, 1e-9);
}

TEST(Size, Gradient) { check_gradient(size_loss, 22); }

TEST(Fold, UniformIsZero) { EXPECT_EQ(fold_loss(make_uniform_grid(4, 6, 300, 200)).value, 0.0); }

TEST(Fold, ReversedEdgeExample) {
  auto g = make_uniform_grid(1, 1, 100, 100);
  g.at(0, 1) = g.at(0, 0) + Vec2{-30, 0};
  EXPECT_NEAR(fold_loss(g).value, 15.0, 1e-9);
}

TEST(Fold, PositiveWheneverAHorizontalEdgeReverses) {
  std::mt19937 rng(23);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = jitter(make_uniform_grid(dim(rng), dim(rng), 100, 100), 30.0, rng);
    bool reversed = false;
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j + 1 < g.cols; ++j) reversed |= g.at(i, j + 1).x < g.at(i, j).x;
    if (reversed) EXPECT_GT(fold_loss(g).value, 0.0);
  }
}

// Larger jitter so that most draws contain reversed edges.
TEST(Fold, Gradient) { check_gradient(fold_loss, 24, 120.0); }

TEST(Distortion, ZeroOnAffineGrids) {
  const auto g = make_uniform_grid(5, 4, 200, 160);
  EXPECT_EQ(distortion_loss(g).value, 0.0);
  Homography a;
  a.m << 1.2, 0.3, 10, -0.2, 0.8, 5, 0, 0, 1;
  EXPECT_LT(distortion_loss(apply_homography_to_grid(g, a)).value, 1e-20);
}

TEST(Distortion, Gradient) { check_gradient(distortion_loss, 25); }

TEST(Rectangular, SelectorsAndLinearity) {
  EXPECT_EQ(rectangular_loss(make_uniform_grid(3, 3, 90, 90), LossWeights{}).value, 0.0);
  std::mt19937 rng(26);
  std::uniform_real_distribution<double> uw(0.0, 3.0);
  for (const auto& g : random_grids(27, 50)) {
    LossWeights w;
    w.gamma1 = 1;
    w.gamma2 = 0;
    w.gamma3 = 0;
    EXPECT_EQ(rectangular_loss(g, w).value, shape_loss(g).value);
    w = {1, 1, 1, uw(rng), uw(rng), uw(rng)};
    const auto r = rectangular_loss(g, w);
    const auto s = shape_loss(g), z = size_loss(g), f = fold_loss(g);
    EXPECT_NEAR(r.value, w.gamma1 * s.value + w.gamma2 * z.value + w.gamma3 * f.value, 1e-12);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec2 expect = w.gamma1 * s.grad[k] + w.gamma2 * z.grad[k] + w.gamma3 * f.grad[k];
      EXPECT_LT(norm(r.grad[k] - expect), 1e-12);
    }
  }
}

TEST(Rectangular, ZeroOnlyOnUnitAxisAlignedGrids) {
  const auto g = make_uniform_grid(3, 4, 120, 90);
  EXPECT_EQ(rectangular_loss(g, LossWeights{}).value, 0.0);
  // Any single-point perturbation tilts or stretches an edge.
  for (std::size_t k = 0; k < g.size(); ++k)
    for (const Vec2 d : {Vec2{0.5, 0}, Vec2{0, -0.5}}) {
      auto p = g;
      p.points[k] += d;
      EXPECT_GT(rectangular_loss(p, LossWeights{}).value, 0.0);
    }
}

TEST(GridLosses, TranslationInvariantAndNonNegative) {
  std::mt19937 rng(28);
  std::uniform_real_distribution<double> ut(-500, 500);
  for (const auto& g : random_grids(29, 30)) {
    auto moved = g;
    const Vec2 t{std::round(ut(rng)), std::round(ut(rng))};
    for (auto& p : moved.points) p += t;
    for (auto loss : {shape_loss, size_loss, fold_loss, distortion_loss}) {
      const double a = loss(g).value;
      EXPECT_GE(a, 0.0);
      EXPECT_NEAR(loss(moved).value, a, 1e-12 * std::max(1.0, a));
    }
  }
}

TEST(Alignment, Examples) {
  const MaskedImage a(20, 10, 3, 0.4, 1.0);
  EXPECT_EQ(alignment_loss(a, a), 0.0);
  EXPECT_NEAR(alignment_loss(MaskedImage(20, 10, 1, 0.25, 1.0), MaskedImage(20, 10, 1, 1.0, 1.0)),
              0.75, 1e-15);
  MaskedImage left(20, 10, 1, 0.2, 0.0), right(20, 10, 1, 0.8, 0.0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) left.mask_at(x, y) = right.mask_at(x + 10, y) = 1.0;
  EXPECT_TRUE(std::isinf(alignment_loss(left, right)));
  EXPECT_THROW(alignment_loss(MaskedImage(20, 10, 1), MaskedImage(21, 10, 1)), Error);
}

namespace {

MaskedImage random_image(std::mt19937& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MaskedImage img(w, h, c);
  for (auto& v : img.pixels) v = u(rng);
  for (auto& m : img.mask) m = u(rng) < 0.2 ? 0.0 : u(rng);
  return img;
}

}  // namespace

TEST(Alignment, MatchesNaiveLoop) {
  std::mt19937 rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = trial % 2 ? 3 : 1;
    const auto a = random_image(rng, 31, 17, c), b = random_image(rng, 31, 17, c);
    double num = 0.0, den = 0.0;
    for (int y = 0; y < 17; ++y)
      for (int x = 0; x < 31; ++x) {
        const double w = a.mask_at(x, y) * b.mask_at(x, y);
        double l1 = 0.0;
        for (int k = 0; k < c; ++k) l1 += std::abs(a.at(x, y, k) - b.at(x, y, k));
        num += w * l1 / c;
        den += w;
      }
    EXPECT_NEAR(alignment_loss(a, b), num / den, 1e-9);
  }
}

TEST(Alignment, PixelGradientMatchesFiniteDifferences) {
  std::mt19937 rng(31);
  const auto a = random_image(rng, 9, 7, 3), b = random_image(rng, 9, 7, 3);
  AlignmentGrad g;
  alignment_loss(a, b, &g);
  const double h = 1e-7;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (std::abs(a.pixels[i] - b.pixels[i]) < 10 * h) continue;
    auto p = a, m = a;
    p.pixels[i] += h;
    m.pixels[i] -= h;
    EXPECT_NEAR(g.dvalue[i], (alignment_loss(p, b) - alignment_loss(m, b)) / (2 * h), 1e-6);
  }
  // Masks are bounded below by 0, so zero entries get a forward difference.
  const double base = alignment_loss(a, b);
  for (std::size_t i = 0; i < a.mask.size(); ++i) {
    auto p = a, m = a;
    p.mask[i] += h;
    m.mask[i] -= h;
    const double fd = a.mask[i] > h ? (alignment_loss(p, b) - alignment_loss(m, b)) / (2 * h)
                                    : (alignment_loss(p, b) - base) / h;
    EXPECT_NEAR(g.dmask[i], fd, 1e-6);
  }
}

TEST(Sampler, JacobianMatchesFiniteDifferences) {
  std::mt19937 rng(32);
  const auto img = random_image(rng, 12, 10, 3);
  std::uniform_real_distribution<double> ux(0.05, 11.95), uy(0.05, 9.95);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 300) {
    const double x = ux(rng), y = uy(rng);
    // Keep clear of the cell lines where the bilinear weights are not smooth.
    auto off_line = [&](double v) {
      const double f = v - 0.5 - std::floor(v - 0.5);
      return f > 1e-3 && f < 1 - 1e-3;
    };
    if (!off_line(x) || !off_line(y)) continue;
    SampleJacobian j;
    const Sample s = sample_bilinear(img, x, y, &j);
    if (s.mask < 1e-3) continue;
    const Sample xp = sample_bilinear(img, x + h, y), xm = sample_bilinear(img, x - h, y);
    const Sample yp = sample_bilinear(img, x, y + h), ym = sample_bilinear(img, x, y - h);
    EXPECT_NEAR(j.dmask_dx, (xp.mask - xm.mask) / (2 * h), 1e-6);
    EXPECT_NEAR(j.dmask_dy, (yp.mask - ym.mask) / (2 * h), 1e-6);
    for (int c = 0; c < 3; ++c) {
      const double tol = 1e-6 / std::min(1.0, s.mask * s.mask);
      EXPECT_NEAR(j.dvalue_dx[c], (xp.value[c] - xm.value[c]) / (2 * h), tol);
      EXPECT_NEAR(j.dvalue_dy[c], (yp.value[c] - ym.value[c]) / (2 * h), tol);
    }
    ++checked;
  }
}

// Full chain: TPS inverse map, masked bilinear sampling, masked L1. The target
// image is an affine ramp per channel, so bilinear sampling is smooth, and the
// reference sits strictly below it, so no residual changes sign. The
// reference mask covers a region that stays inside the warped grid hull and
// inside the target frame for every draw.
TEST(WarpAlignment, GradientMatchesFiniteDifferences) {
  const int W = 64, H = 48;
  MaskedImage tar(W, H, 3, 0.0, 1.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      tar.at(x, y, 0) = 0.4 + 0.5 * px / W;
      tar.at(x, y, 1) = 0.4 + 0.5 * py / H;
      tar.at(x, y, 2) = 0.4 + 0.3 * (px + py) / (W + H);
    }
  const BBox canvas{-8, -6, W + 8, H + 6};
  std::mt19937 rng(33);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  MaskedImage ref(canvas.width(), canvas.height(), 3);
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      const double cx = canvas.x0 + x + 0.5, cy = canvas.y0 + y + 0.5;
      if (cx > 12 && cx < W - 12 && cy > 10 && cy < H - 10) ref.mask_at(x, y) = 0.5 + u(rng);
      for (int c = 0; c < 3; ++c) ref.at(x, y, c) = u(rng);
    }
  const auto src = make_uniform_grid(3, 4, W, H);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dst = jitter(src, 2.5, rng);
    const auto analytic = warp_alignment_loss(tar, ref, src, dst, canvas);
    ASSERT_TRUE(std::isfinite(analytic.value));
    const auto fd = numeric_gradient(dst, [&](const ControlGrid& d) {
      return warp_alignment_loss(tar, ref, src, d, canvas).value;
    });
    EXPECT_LT(relative_error(analytic.grad, fd), 1e-4);
  }
}

TEST(WarpAlignment, AgreesWithWarpThenCompare) {
  const auto tar = svtest::render(svtest::SmoothField(34), 80, 60, 3);
  const auto ref_full = svtest::render(svtest::SmoothField(34), 80, 60, 3, 1.5, -0.5);
  const BBox canvas{0, 0, 80, 60};
  std::mt19937 rng(35);
  const auto src = make_uniform_grid(4, 4, 80, 60);
  const auto dst = jitter(src, 3.0, rng);
  const double direct = alignment_loss(tps_warp(tar, src, dst, canvas), ref_full);
  EXPECT_NEAR(warp_alignment_loss(tar, ref_full, src, dst, canvas).value, direct, 1e-12);
}

TEST(Total, WeightedSum) {
  std::mt19937 rng(36);
  std::uniform_real_distribution<double> uw(0.0, 2.0);
  const auto a = svtest::render(svtest::SmoothField(37), 40, 30, 1);
  const auto b = svtest::render(svtest::SmoothField(38), 40, 30, 1);
  for (const auto& g : random_grids(39, 20)) {
    const LossWeights w{uw(rng), uw(rng), uw(rng), uw(rng), uw(rng), uw(rng)};
    const auto r = total_warp_loss(a, b, g, w);
    const double expect = w.alpha * alignment_loss(a, b) + w.beta * distortion_loss(g).value +
                          w.gamma * (w.gamma1 * shape_loss(g).value + w.gamma2 * size_loss(g).value +
                                     w.gamma3 * fold_loss(g).value);
    EXPECT_NEAR(r.total, expect, 1e-12);
  }
  const auto g = make_uniform_grid(2, 2, 40, 30);
  const auto r = total_warp_loss(a, b, g, LossWeights{1, 0, 0, 1, 1, 1});
  EXPECT_EQ(r.total, r.alignment);
  EXPECT_EQ(total_warp_loss(a, a, g, LossWeights{}).total, 0.0);
  EXPECT_THROW(validate(LossWeights{-1, 0, 0, 0, 0, 0}), Error);
}
