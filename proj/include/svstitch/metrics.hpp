#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "svstitch/image.hpp"

namespace svstitch {

// A pixel takes part in a comparison when both masks reach this value.
inline constexpr double kJointMaskMin = 0.999;

// 10 log10(1 / MSE) over joint-mask pixels and all channels, peak 1.
// Identical inputs give +infinity. Throws NoOverlap on an empty joint mask.
double psnr(const MaskedImage& a, const MaskedImage& b);

// Mean local SSIM over 11x11 Gaussian windows (sigma 1.5, k1 = 0.01,
// k2 = 0.03, L = 1), averaged over channels. A window counts only when all
// of its pixels are joint-mask pixels. Throws NoOverlap when none does.
double ssim(const MaskedImage& a, const MaskedImage& b);

struct OverlapScores {
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<double> pair_psnr;
  std::vector<double> pair_ssim;
};

// Scores of every neighbouring pair (i, i+1) of warped images on a shared
// canvas, computed on 8-bit quantized copies so that the numbers match what
// the saved artifacts reproduce. Means over pairs.
OverlapScores adjacent_overlap_scores(const std::vector<MaskedImage>& warped);

enum class Bucket { Easy, Moderate, Hard };
const char* to_string(Bucket b);

struct MetricRow {
  std::string set;
  int n_images = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  Bucket bucket = Bucket::Moderate;
  std::string toggles;
};

// Ranks rows by PSNR, highest first, ties in input order. The top
// round(0.3 n) rows (at least one) are Easy, the bottom round(0.3 n) Hard,
// the rest Moderate. Rows keep their input order.
void bucketize(std::vector<MetricRow>& rows);

// Header `set,n,psnr,ssim,bucket,toggles`, one line per row.
void write_csv(std::ostream& os, const std::vector<MetricRow>& rows);

}  // namespace svstitch
