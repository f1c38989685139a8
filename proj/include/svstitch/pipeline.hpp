#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "svstitch/compose.hpp"
#include "svstitch/dataset.hpp"
#include "svstitch/metrics.hpp"
#include "svstitch/pair_align.hpp"
#include "svstitch/propagate.hpp"

namespace svstitch {

// Switches for the ablation axes. A disabled loss term gets weight 0.
struct Toggles {
  bool cylindrical = true;
  bool shape = true;
  bool size = true;
  bool fold = true;

  // "all" or a '+'-joined list such as "no-shape+no-fold".
  std::string label() const;
  friend bool operator==(const Toggles&, const Toggles&) = default;
};

struct StitchConfig {
  AlignConfig align;
  Toggles toggles;
  SeamOptions seam;
  int jobs = 1;
};

// cfg.align with the disabled loss terms zeroed.
AlignConfig effective_align_config(const StitchConfig& cfg);

struct StitchResult {
  std::string set_id;
  ImageOrder order;
  bool cylindrical = false;
  std::vector<MaskedImage> frames;  // images after the optional projection
  std::vector<PairMotion> left;     // chains ordered from the center outward
  std::vector<PairMotion> right;
  std::vector<GlobalWarp> global;
  PanoramaLayout layout;
  std::vector<MaskedImage> warped;
  Panorama panorama;
  OverlapScores scores;
  std::vector<LossReport> grid_losses;  // grid terms of each global grid
};

// Projection, pairwise alignment, propagation, warping, composition and
// overlap scoring. Pair failures are rethrown with the pair named as
// "pair (i,j)". Deterministic for a given set and config.
StitchResult stitch_set(const SurroundSet& set, const StitchConfig& cfg);

// The same pipeline with the pair alignment replaced by given motions,
// ordered from the center outward as in StitchResult.
StitchResult render_set(const SurroundSet& set, const StitchConfig& cfg,
                        std::vector<PairMotion> left, std::vector<PairMotion> right);

// Pure-homography pair motions (left chain, right chain) implied by per-image
// warps into a common frame, e.g. the ground truth of a synthetic set.
// `sizes` holds each frame's (width, height).
std::pair<std::vector<PairMotion>, std::vector<PairMotion>> motions_from_warps(
    const std::vector<Homography>& to_common, const std::vector<std::pair<int, int>>& sizes,
    int grid_u, int grid_v);

// Motions of the pipeline as JSON: pair motions, global warps, the layout
// and a schema_version. Homographies are row-major 3x3 arrays, residuals
// flat [x0, y0, x1, y1, ...] arrays.
std::string motions_json(const StitchResult& r, const StitchConfig& cfg);

inline constexpr int kMotionsSchemaVersion = 1;

// Writes panorama.png, warped_<i>.png, mask_<i>.png, motions.json and
// report.csv into `dir`.
void write_stitch_artifacts(const std::filesystem::path& dir, const StitchResult& r,
                            const StitchConfig& cfg);

MetricRow metric_row(const StitchResult& r, const StitchConfig& cfg);

}  // namespace svstitch
