#include "svstitch/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;

void check_pair(const MaskedImage& a, const MaskedImage& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail(ErrorKind::InvalidArgument, "metric inputs must share one canvas");
}

std::vector<char> joint_mask(const MaskedImage& a, const MaskedImage& b) {
  std::vector<char> j(a.pixel_count());
  for (std::size_t i = 0; i < j.size(); ++i)
    j[i] = a.mask[i] >= kJointMaskMin && b.mask[i] >= kJointMaskMin;
  return j;
}

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> g{};
  double s = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) s += g[i + kRadius] = std::exp(-i * i / (2 * kSigma * kSigma));
  for (auto& v : g) v /= s;
  return g;
}

// Separable Gaussian blur of a bw x bh raster, defined only at centres whose
// window fits inside it.
std::vector<double> blur(const std::vector<double>& src, int bw, int bh) {
  static const auto g = gaussian_taps();
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < bh; ++y)
    for (int x = kRadius; x + kRadius < bw; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) s += g[k + kRadius] * src[y * bw + x + k];
      tmp[y * bw + x] = s;
    }
  for (int y = kRadius; y + kRadius < bh; ++y)
    for (int x = kRadius; x + kRadius < bw; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) s += g[k + kRadius] * tmp[(y + k) * bw + x];
      out[y * bw + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const MaskedImage& a, const MaskedImage& b) {
  check_pair(a, b);
  const auto j = joint_mask(a, b);
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = a.pixels[i * a.channels + c] - b.pixels[i * b.channels + c];
      se += d * d;
    }
    ++count;
  }
  if (count == 0) fail(ErrorKind::NoOverlap, "psnr: empty joint mask");
  const double mse = se / (static_cast<double>(count) * a.channels);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const MaskedImage& a, const MaskedImage& b) {
  check_pair(a, b);
  const auto j = joint_mask(a, b);
  int x0 = a.width, y0 = a.height, x1 = -1, y1 = -1;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (j[a.index(x, y)]) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  if (x1 < 0 || bw < 2 * kRadius + 1 || bh < 2 * kRadius + 1)
    fail(ErrorKind::NoOverlap, "ssim: no complete window in the joint mask");

  // Integral image of the joint mask decides which windows are complete.
  std::vector<int> integral(static_cast<std::size_t>(bw + 1) * (bh + 1), 0);
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x)
      integral[(y + 1) * (bw + 1) + x + 1] = j[a.index(x0 + x, y0 + y)] +
                                              integral[y * (bw + 1) + x + 1] +
                                              integral[(y + 1) * (bw + 1) + x] -
                                              integral[y * (bw + 1) + x];
  const int full = (2 * kRadius + 1) * (2 * kRadius + 1);
  std::vector<char> valid(static_cast<std::size_t>(bw) * bh, 0);
  std::size_t n_valid = 0;
  for (int y = kRadius; y + kRadius < bh; ++y)
    for (int x = kRadius; x + kRadius < bw; ++x) {
      const int xa = x - kRadius, ya = y - kRadius, xb = x + kRadius + 1, yb = y + kRadius + 1;
      const int s = integral[yb * (bw + 1) + xb] - integral[ya * (bw + 1) + xb] -
                    integral[yb * (bw + 1) + xa] + integral[ya * (bw + 1) + xa];
      if (s == full) {
        valid[y * bw + x] = 1;
        ++n_valid;
      }
    }
  if (n_valid == 0) fail(ErrorKind::NoOverlap, "ssim: no complete window in the joint mask");

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  const std::size_t np = static_cast<std::size_t>(bw) * bh;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> va(np), vb(np), aa(np), bb(np), ab(np);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * bw + x;
        const std::size_t src = a.index(x0 + x, y0 + y) * a.channels + c;
        va[k] = a.pixels[src];
        vb[k] = b.pixels[src];
        aa[k] = va[k] * va[k];
        bb[k] = vb[k] * vb[k];
        ab[k] = va[k] * vb[k];
      }
    const auto ma = blur(va, bw, bh), mb = blur(vb, bw, bh);
    const auto saa = blur(aa, bw, bh), sbb = blur(bb, bw, bh), sab = blur(ab, bw, bh);
    for (std::size_t k = 0; k < np; ++k) {
      if (!valid[k]) continue;
      const double vara = saa[k] - ma[k] * ma[k], varb = sbb[k] - mb[k] * mb[k];
      const double cov = sab[k] - ma[k] * mb[k];
      total += ((2 * ma[k] * mb[k] + c1) * (2 * cov + c2)) /
               ((ma[k] * ma[k] + mb[k] * mb[k] + c1) * (vara + varb + c2));
    }
  }
  return total / (static_cast<double>(n_valid) * a.channels);
}

OverlapScores adjacent_overlap_scores(const std::vector<MaskedImage>& warped) {
  if (warped.size() < 2) fail(ErrorKind::InvalidArgument, "need at least two warped images");
  OverlapScores s;
  std::vector<MaskedImage> q;
  q.reserve(warped.size());
  for (const auto& w : warped) q.push_back(quantize8(w));
  for (std::size_t i = 0; i + 1 < q.size(); ++i) {
    s.pair_psnr.push_back(psnr(q[i], q[i + 1]));
    s.pair_ssim.push_back(ssim(q[i], q[i + 1]));
  }
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  s.psnr = mean(s.pair_psnr);
  s.ssim = mean(s.pair_ssim);
  return s;
}

const char* to_string(Bucket b) {
  switch (b) {
    case Bucket::Easy: return "Easy";
    case Bucket::Moderate: return "Moderate";
    case Bucket::Hard: return "Hard";
  }
  return "?";
}

void bucketize(std::vector<MetricRow>& rows) {
  const int n = static_cast<int>(rows.size());
  if (n == 0) return;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rows[a].psnr > rows[b].psnr; });
  const int tail = static_cast<int>(std::lround(0.3 * n));
  const int easy = std::max(1, tail);
  const int hard = std::min(tail, n - easy);
  for (int r = 0; r < n; ++r) {
    Bucket b = Bucket::Moderate;
    if (r < easy) b = Bucket::Easy;
    else if (r >= n - hard) b = Bucket::Hard;
    rows[order[r]].bucket = b;
  }
}

void write_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  const auto num = [](double v) {
    std::ostringstream s;
    if (std::isinf(v)) s << (v > 0 ? "inf" : "-inf");
    else s << std::setprecision(10) << v;
    return s.str();
  };
  os << "set,n,psnr,ssim,bucket,toggles\n";
  for (const auto& r : rows)
    os << r.set << ',' << r.n_images << ',' << num(r.psnr) << ',' << num(r.ssim) << ','
       << to_string(r.bucket) << ',' << r.toggles << '\n';
}

}  // namespace svstitch
