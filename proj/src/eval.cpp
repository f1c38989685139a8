#include "svstitch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svstitch/errors.hpp"
#include "svstitch/image_io.hpp"

namespace svstitch {

namespace fs = std::filesystem;
using nlohmann::json;

MetricRow load_run(const fs::path& dir) {
  const fs::path file = dir / "motions.json";
  std::ifstream in(file);
  if (!in) fail(ErrorKind::LoadError, "missing " + file.string());
  json j;
  MetricRow row;
  try {
    j = json::parse(in);
    if (j.at("schema_version").get<int>() != kMotionsSchemaVersion)
      fail(ErrorKind::LoadError, file.string() + ": unsupported schema_version");
    row.set = j.at("set").get<std::string>();
    row.n_images = j.at("n_images").get<int>();
    row.toggles = j.at("toggles").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::LoadError, file.string() + ": " + e.what());
  }
  if (row.n_images < 2) fail(ErrorKind::LoadError, file.string() + ": fewer than 2 images");

  std::vector<MaskedImage> warped;
  for (int i = 0; i < row.n_images; ++i) {
    const fs::path img = dir / ("warped_" + std::to_string(i) + ".png");
    const fs::path mask = dir / ("mask_" + std::to_string(i) + ".png");
    for (const auto& p : {img, mask})
      if (!fs::exists(p)) fail(ErrorKind::LoadError, "missing " + p.string());
    warped.push_back(load_image(img));
    load_mask_into(mask, warped.back());
  }
  const OverlapScores s = adjacent_overlap_scores(warped);
  row.psnr = s.psnr;
  row.ssim = s.ssim;
  return row;
}

std::vector<MetricRow> evaluate_runs(const std::vector<fs::path>& dirs) {
  std::vector<MetricRow> rows;
  for (const auto& d : dirs) rows.push_back(load_run(d));
  bucketize(rows);
  return rows;
}

std::vector<Toggles> all_toggle_combinations() {
  std::vector<Toggles> out;
  for (int bits = 0; bits < 16; ++bits)
    out.push_back({!(bits & 1), !(bits & 2), !(bits & 4), !(bits & 8)});
  return out;
}

namespace {

SurroundSet first_images(const SurroundSet& set, int n) {
  SurroundSet s;
  s.id = set.id;
  s.images.assign(set.images.begin(), set.images.begin() + n);
  s.intrinsics.assign(set.intrinsics.begin(), set.intrinsics.begin() + n);
  s.center_index = (n - 1) / 2;
  s.cylindrical = set.cylindrical;
  return s;
}

}  // namespace

AblationReport run_ablation(const std::vector<SurroundSet>& sets, const std::vector<Toggles>& combos,
                            const StitchConfig& base) {
  int max_n = 0;
  for (const auto& s : sets) max_n = std::max(max_n, static_cast<int>(s.images.size()));
  AblationReport report;
  for (const auto& t : combos) {
    for (int n = 2; n <= max_n; ++n) {
      AblationRow row;
      row.toggles = t;
      row.n_images = n;
      for (const auto& set : sets) {
        if (static_cast<int>(set.images.size()) < n) continue;
        AblationCell cell;
        cell.set = set.id;
        cell.toggles = t;
        cell.n_images = n;
        StitchConfig cfg = base;
        cfg.toggles = t;
        try {
          const StitchResult r = stitch_set(first_images(set, n), cfg);
          cell.ok = true;
          cell.psnr = r.scores.psnr;
          cell.ssim = r.scores.ssim;
          for (const auto& g : r.grid_losses) {
            cell.shape += g.shape / r.grid_losses.size();
            cell.size += g.size / r.grid_losses.size();
            cell.fold = std::max(cell.fold, g.fold);
          }
        } catch (const Error& e) {
          cell.error = e.what();
        }
        if (cell.ok) {
          ++row.succeeded;
          row.psnr += cell.psnr;
          row.ssim += cell.ssim;
          row.shape += cell.shape;
          row.size += cell.size;
          row.fold += cell.fold;
        } else {
          ++row.failed;
        }
        report.cells.push_back(std::move(cell));
      }
      const double k = row.succeeded > 0 ? 1.0 / row.succeeded : std::numeric_limits<double>::quiet_NaN();
      row.psnr *= k;
      row.ssim *= k;
      row.shape *= k;
      row.size *= k;
      row.fold *= k;
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_ablation_csv(std::ostream& os, const AblationReport& report) {
  const auto num = [](double v) {
    std::ostringstream s;
    if (std::isnan(v)) s << "nan";
    else if (std::isinf(v)) s << (v > 0 ? "inf" : "-inf");
    else s << std::setprecision(10) << v;
    return s.str();
  };
  os << "toggles,n,psnr,ssim,shape,size,fold,succeeded,failed\n";
  for (const auto& r : report.rows)
    os << r.toggles.label() << ',' << r.n_images << ',' << num(r.psnr) << ',' << num(r.ssim) << ','
       << num(r.shape) << ',' << num(r.size) << ',' << num(r.fold) << ',' << r.succeeded << ','
       << r.failed << '\n';
}

}  // namespace svstitch
