#include "svstitch/compose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "svstitch/errors.hpp"

namespace svstitch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_canvas(const MaskedImage& a, const MaskedImage& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail(ErrorKind::InvalidArgument, "images must share one canvas");
}

MaskedImage transpose(const MaskedImage& img) {
  MaskedImage t(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      t.mask_at(y, x) = img.mask_at(x, y);
      for (int c = 0; c < img.channels; ++c) t.at(y, x, c) = img.at(x, y, c);
    }
  return t;
}

WeightMap transpose(const WeightMap& m) {
  WeightMap t(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) t.at(y, x) = m.at(x, y);
  return t;
}

double validity(double m) { return m > 0.0 ? 1.0 : 0.0; }

SeamMaskPair vertical_seam(const MaskedImage& a, const MaskedImage& b, int feather) {
  const auto overlap = overlap_region(a, b);
  if (std::none_of(overlap.begin(), overlap.end(), [](bool v) { return v; }))
    fail(ErrorKind::NoOverlap, "seam: images do not overlap");

  SeamMaskPair out;
  out.seam = min_cost_seam(seam_cost(a, b), overlap, a.width, a.height, &out.cost);
  out.mask_a = WeightMap(a.width, a.height);
  out.mask_b = WeightMap(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    const int s = out.seam[y];
    for (int x = 0; x < a.width; ++x) {
      const std::size_t i = a.index(x, y);
      if (!overlap[i]) {
        out.mask_a.w[i] = validity(a.mask[i]);
        out.mask_b.w[i] = validity(b.mask[i]);
        continue;
      }
      double wa;
      if (feather > 0)
        wa = std::clamp(0.5 - (x - s) / static_cast<double>(feather), 0.0, 1.0);
      else
        wa = x < s ? 1.0 : 0.0;
      out.mask_a.w[i] = wa;
      out.mask_b.w[i] = 1.0 - wa;
    }
  }
  return out;
}

}  // namespace

std::vector<bool> overlap_region(const MaskedImage& a, const MaskedImage& b) {
  check_canvas(a, b);
  std::vector<bool> out(a.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.mask[i] > 0.0 && b.mask[i] > 0.0;
  return out;
}

std::vector<double> seam_cost(const MaskedImage& a, const MaskedImage& b) {
  check_canvas(a, b);
  std::vector<double> out(a.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < a.channels; ++c) {
      const double d = a.pixels[i * a.channels + c] - b.pixels[i * b.channels + c];
      s += d * d;
    }
    out[i] = s;
  }
  return out;
}

std::vector<int> min_cost_seam(const std::vector<double>& cost, const std::vector<bool>& overlap,
                               int width, int height, double* total) {
  const auto idx = [width](int x, int y) { return static_cast<std::size_t>(y) * width + x; };
  std::vector<double> dp(cost.size(), kInf);
  std::vector<int> parent(cost.size(), -1);
  std::vector<int> seam(height, -1);
  double sum = 0.0;

  // Walks back from the cheapest end pixel of the piece ending at `last`.
  const auto finish = [&](int last) {
    int best = -1;
    for (int x = 0; x < width; ++x)
      if (std::isfinite(dp[idx(x, last)]) && (best < 0 || dp[idx(x, last)] < dp[idx(best, last)]))
        best = x;
    sum += dp[idx(best, last)];
    for (int y = last, x = best;; --y) {
      seam[y] = x;
      const int p = parent[idx(x, y)];
      if (p < 0) break;
      x = p;
    }
  };

  bool open = false;  // a piece continues from the previous row
  for (int y = 0; y < height; ++y) {
    bool any = false;
    for (int x = 0; x < width; ++x) any = any || overlap[idx(x, y)];
    if (!any) {
      if (open) finish(y - 1);
      open = false;
      continue;
    }
    bool reachable = false;
    if (open) {
      for (int x = 0; x < width; ++x) {
        if (!overlap[idx(x, y)]) continue;
        double best = kInf;
        int arg = -1;
        for (int dx : {0, -1, 1}) {
          const int px = x + dx;
          if (px < 0 || px >= width) continue;
          if (dp[idx(px, y - 1)] < best) {
            best = dp[idx(px, y - 1)];
            arg = px;
          }
        }
        if (arg >= 0) {
          dp[idx(x, y)] = best + cost[idx(x, y)];
          parent[idx(x, y)] = arg;
          reachable = true;
        }
      }
      // The overlap jumped sideways by more than one column: close the piece.
      if (!reachable) finish(y - 1);
    }
    if (!reachable) {
      for (int x = 0; x < width; ++x)
        if (overlap[idx(x, y)]) dp[idx(x, y)] = cost[idx(x, y)];
    }
    open = true;
  }
  if (open) finish(height - 1);
  if (total) *total = sum;
  return seam;
}

SeamMaskPair pairwise_seam(const MaskedImage& a, const MaskedImage& b, const SeamOptions& opt) {
  check_canvas(a, b);
  if (!opt.horizontal) return vertical_seam(a, b, opt.feather);
  SeamMaskPair t = vertical_seam(transpose(a), transpose(b), opt.feather);
  t.mask_a = transpose(t.mask_a);
  t.mask_b = transpose(t.mask_b);
  return t;
}

std::vector<WeightMap> final_masks(const std::vector<std::vector<WeightMap>>& pair_masks) {
  const std::size_t n = pair_masks.size();
  std::vector<WeightMap> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t want = (n == 1 || i == 0 || i + 1 == n) ? 1 : 2;
    const auto& ms = pair_masks[i];
    if (ms.size() != want)
      fail(ErrorKind::InvalidArgument, "image " + std::to_string(i) + " needs " +
                                           std::to_string(want) + " pairwise masks, got " +
                                           std::to_string(ms.size()));
    WeightMap f = ms[0];
    for (std::size_t k = 1; k < ms.size(); ++k) {
      if (ms[k].width != f.width || ms[k].height != f.height)
        fail(ErrorKind::InvalidArgument, "pairwise masks differ in size");
      for (std::size_t p = 0; p < f.w.size(); ++p) f.w[p] *= ms[k].w[p];
    }
    out.push_back(std::move(f));
  }
  return out;
}

void normalize_masks(std::vector<WeightMap>& finals, const std::vector<MaskedImage>& warped) {
  if (finals.size() != warped.size())
    fail(ErrorKind::InvalidArgument, "one final mask per warped image required");
  if (finals.empty()) return;
  const std::size_t np = finals[0].w.size();
  for (std::size_t i = 0; i < finals.size(); ++i)
    if (finals[i].w.size() != np || warped[i].pixel_count() != np)
      fail(ErrorKind::InvalidArgument, "masks and images must share one canvas");
  for (std::size_t p = 0; p < np; ++p) {
    double sum = 0.0;
    int valid = 0;
    for (std::size_t i = 0; i < finals.size(); ++i) {
      sum += finals[i].w[p];
      valid += warped[i].mask[p] > 0.0;
    }
    if (valid == 0) {
      for (auto& f : finals) f.w[p] = 0.0;
    } else if (sum > 0.0) {
      for (auto& f : finals) f.w[p] /= sum;
    } else {
      for (std::size_t i = 0; i < finals.size(); ++i)
        finals[i].w[p] = warped[i].mask[p] > 0.0 ? 1.0 / valid : 0.0;
    }
  }
}

Panorama blend(const std::vector<MaskedImage>& warped, const std::vector<WeightMap>& finals) {
  if (warped.empty() || warped.size() != finals.size())
    fail(ErrorKind::InvalidArgument, "blend needs one final mask per warped image");
  const MaskedImage& first = warped[0];
  for (std::size_t i = 0; i < warped.size(); ++i) {
    if (warped[i].width != first.width || warped[i].height != first.height ||
        warped[i].channels != first.channels || finals[i].width != first.width ||
        finals[i].height != first.height)
      fail(ErrorKind::InvalidArgument, "blend inputs must share one canvas");
  }
  Panorama pano;
  pano.image = MaskedImage(first.width, first.height, first.channels);
  pano.final_masks = finals;
  const int ch = first.channels;
  for (std::size_t p = 0; p < first.pixel_count(); ++p) {
    double den = 0.0, m = 0.0;
    double num[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < warped.size(); ++i) {
      const double f = finals[i].w[p];
      if (f == 0.0) continue;
      den += f;
      for (int c = 0; c < ch; ++c) num[c] += f * warped[i].pixels[p * ch + c];
      m = std::max(m, warped[i].mask[p]);
    }
    if (den <= 0.0) continue;
    for (int c = 0; c < ch; ++c) pano.image.pixels[p * ch + c] = num[c] / den;
    pano.image.mask[p] = m;
  }
  return pano;
}

Panorama compose(const std::vector<MaskedImage>& warped, const SeamOptions& opt) {
  const std::size_t n = warped.size();
  if (n == 0) fail(ErrorKind::InvalidArgument, "nothing to compose");
  std::vector<std::vector<WeightMap>> pair_masks(n);
  if (n == 1) {
    WeightMap v(warped[0].width, warped[0].height);
    for (std::size_t p = 0; p < v.w.size(); ++p) v.w[p] = validity(warped[0].mask[p]);
    pair_masks[0].push_back(std::move(v));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    SeamMaskPair s = pairwise_seam(warped[i], warped[i + 1], opt);
    pair_masks[i].push_back(std::move(s.mask_a));
    pair_masks[i + 1].push_back(std::move(s.mask_b));
  }
  auto finals = final_masks(pair_masks);
  normalize_masks(finals, warped);
  return blend(warped, finals);
}

}  // namespace svstitch
