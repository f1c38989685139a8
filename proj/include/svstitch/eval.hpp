#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "svstitch/dataset.hpp"
#include "svstitch/metrics.hpp"
#include "svstitch/pipeline.hpp"

namespace svstitch {

// Metrics of a finished stitch directory, recomputed from motions.json and
// the saved warped_<i>.png / mask_<i>.png. Throws LoadError naming the
// missing or malformed file.
MetricRow load_run(const std::filesystem::path& dir);

// load_run over every directory, then bucketize. Row order follows `dirs`.
std::vector<MetricRow> evaluate_runs(const std::vector<std::filesystem::path>& dirs);

// One pipeline run of the ablation grid.
struct AblationCell {
  std::string set;
  Toggles toggles;
  int n_images = 0;
  bool ok = false;
  std::string error;  // set when !ok
  double psnr = 0.0;
  double ssim = 0.0;
  // Grid diagnostics of the final global grids: mean shape and size loss,
  // largest fold loss.
  double shape = 0.0;
  double size = 0.0;
  double fold = 0.0;
};

// Means over the sets that succeeded for one (toggles, n) pair.
struct AblationRow {
  Toggles toggles;
  int n_images = 0;
  int succeeded = 0;
  int failed = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double shape = 0.0;
  double size = 0.0;
  double fold = 0.0;
};

struct AblationReport {
  std::vector<AblationCell> cells;
  std::vector<AblationRow> rows;  // combos outer, n inner
};

// The 16 on/off combinations of the four toggles, all-on first.
std::vector<Toggles> all_toggle_combinations();

// Stitches the first n images of every set for each toggle combination and
// each n in [2, N], N being the largest set size. Sets smaller than n are
// skipped for that n. A pipeline error marks its cell failed and the sweep
// goes on.
AblationReport run_ablation(const std::vector<SurroundSet>& sets, const std::vector<Toggles>& combos,
                            const StitchConfig& base);

// Header `toggles,n,psnr,ssim,shape,size,fold,succeeded,failed`. Means of
// rows without any success are written as "nan".
void write_ablation_csv(std::ostream& os, const AblationReport& report);

}  // namespace svstitch
