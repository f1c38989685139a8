#include "svstitch/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "svstitch/errors.hpp"
#include "svstitch/image_io.hpp"
#include "svstitch/parallel.hpp"

namespace svstitch {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Toggles::label() const {
  std::string s;
  const auto add = [&](bool on, const char* name) {
    if (on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  add(cylindrical, "no-cylindrical");
  add(shape, "no-shape");
  add(size, "no-size");
  add(fold, "no-fold");
  return s.empty() ? "all" : s;
}

AlignConfig effective_align_config(const StitchConfig& cfg) {
  AlignConfig a = cfg.align;
  if (!cfg.toggles.shape) a.weights.gamma1 = 0.0;
  if (!cfg.toggles.size) a.weights.gamma2 = 0.0;
  if (!cfg.toggles.fold) a.weights.gamma3 = 0.0;
  return a;
}

namespace {

void check_set(const SurroundSet& set) {
  if (set.images.size() < 2) fail(ErrorKind::InvalidArgument, "a set needs at least 2 images");
  if (set.intrinsics.size() != set.images.size())
    fail(ErrorKind::InvalidArgument, "one set of intrinsics per image required");
}

StitchResult prepare(const SurroundSet& set, const StitchConfig& cfg) {
  check_set(set);
  const int n = static_cast<int>(set.images.size());
  StitchResult r;
  r.set_id = set.id;
  r.order = order_images(n);
  r.cylindrical = set.cylindrical && cfg.toggles.cylindrical;
  r.frames.resize(n);
  parallel_for(n, cfg.jobs, [&](int i) {
    r.frames[i] = stage_one(set.images[i], set.intrinsics[i], r.cylindrical);
  });
  return r;
}

// Propagation, layout, warping, composition and scoring of r.left/r.right.
void render(StitchResult& r, const StitchConfig& cfg) {
  const int n = static_cast<int>(r.frames.size());
  r.global = propagate_motion(n, r.left, r.right);
  std::vector<std::pair<int, int>> sizes;
  double area = 0.0;
  for (const auto& f : r.frames) {
    sizes.emplace_back(f.width, f.height);
    area += static_cast<double>(f.width) * f.height;
  }
  r.layout = global_warp_grids(r.global, sizes);
  const double canvas_area = static_cast<double>(r.layout.canvas.width()) * r.layout.canvas.height();
  if (canvas_area > 16.0 * area)
    fail(ErrorKind::DegenerateWarp, "panorama canvas is implausibly large (" +
                                        std::to_string(r.layout.canvas.width()) + "x" +
                                        std::to_string(r.layout.canvas.height()) + ")");

  r.warped.resize(n);
  parallel_for(n, cfg.jobs, [&](int i) {
    const auto src = make_uniform_grid(r.global[i].rows - 1, r.global[i].cols - 1, r.frames[i].width,
                                       r.frames[i].height);
    r.warped[i] = tps_warp(r.frames[i], src, r.layout.grids[i], r.layout.canvas);
  });
  r.panorama = compose(r.warped, cfg.seam);
  r.scores = adjacent_overlap_scores(r.warped);
  r.grid_losses.clear();
  for (const auto& g : r.layout.grids) r.grid_losses.push_back(combine_losses(0.0, g, LossWeights{}));
}

}  // namespace

StitchResult stitch_set(const SurroundSet& set, const StitchConfig& cfg) {
  const AlignConfig align = effective_align_config(cfg);
  validate(align);
  StitchResult r = prepare(set, cfg);

  // Every non-center image is aligned against its neighbour toward the center.
  struct Job {
    int ref, tar, hint;
    bool left;
    std::size_t slot;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < r.order.left.size(); ++k) {
    const int i = r.order.left[k];
    jobs.push_back({i + 1, i, -1, true, k});
  }
  for (std::size_t k = 0; k < r.order.right.size(); ++k) {
    const int i = r.order.right[k];
    jobs.push_back({i - 1, i, +1, false, k});
  }
  r.left.resize(r.order.left.size());
  r.right.resize(r.order.right.size());
  parallel_for(static_cast<int>(jobs.size()), cfg.jobs, [&](int j) {
    const Job& job = jobs[j];
    AlignConfig a = align;
    a.direction_hint = job.hint;
    try {
      PairMotion m = estimate_pair_motion(r.frames[job.ref], r.frames[job.tar], a);
      m.ref_index = job.ref;
      m.tar_index = job.tar;
      (job.left ? r.left : r.right)[job.slot] = std::move(m);
    } catch (const Error& e) {
      fail(e.kind(), "pair (" + std::to_string(std::min(job.ref, job.tar)) + "," +
                         std::to_string(std::max(job.ref, job.tar)) + "): " + e.what());
    }
  });

  render(r, cfg);
  return r;
}

StitchResult render_set(const SurroundSet& set, const StitchConfig& cfg,
                        std::vector<PairMotion> left, std::vector<PairMotion> right) {
  StitchResult r = prepare(set, cfg);
  if (left.size() != r.order.left.size() || right.size() != r.order.right.size())
    fail(ErrorKind::InvalidArgument, "pair motion chains do not match the image order");
  r.left = std::move(left);
  r.right = std::move(right);
  render(r, cfg);
  return r;
}

std::pair<std::vector<PairMotion>, std::vector<PairMotion>> motions_from_warps(
    const std::vector<Homography>& to_common, const std::vector<std::pair<int, int>>& sizes,
    int grid_u, int grid_v) {
  const int n = static_cast<int>(to_common.size());
  if (static_cast<int>(sizes.size()) != n)
    fail(ErrorKind::InvalidArgument, "one frame size per warp required");
  const ImageOrder order = order_images(n);
  const auto step = [&](int ref, int tar) {
    PairMotion m = identity_motion(grid_u, grid_v, sizes[tar].first, sizes[tar].second);
    m.h_offsets = matrix_to_four_pt(to_common[ref].inverse() * to_common[tar], sizes[tar].first,
                                    sizes[tar].second);
    m.ref_index = ref;
    m.tar_index = tar;
    return m;
  };
  std::pair<std::vector<PairMotion>, std::vector<PairMotion>> out;
  for (int i : order.left) out.first.push_back(step(i + 1, i));
  for (int i : order.right) out.second.push_back(step(i - 1, i));
  return out;
}

namespace {

json flat(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const auto& p : v) {
    a.push_back(p.x);
    a.push_back(p.y);
  }
  return a;
}

json report_json(const LossReport& l) {
  return {{"alignment", l.alignment}, {"distortion", l.distortion}, {"shape", l.shape},
          {"size", l.size},           {"fold", l.fold},             {"total", l.total}};
}

}  // namespace

std::string motions_json(const StitchResult& r, const StitchConfig& cfg) {
  json j;
  j["schema_version"] = kMotionsSchemaVersion;
  j["set"] = r.set_id;
  j["n_images"] = r.frames.size();
  j["center_index"] = r.order.center;
  j["cylindrical"] = r.cylindrical;
  j["toggles"] = cfg.toggles.label();
  j["grid"] = {cfg.align.grid_u, cfg.align.grid_v};
  j["pair_motions"] = json::array();
  const auto add_pairs = [&](const std::vector<PairMotion>& chain) {
    for (const auto& m : chain) {
      json o = json::array();
      for (const auto& v : m.h_offsets.offsets) o.push_back({v.x, v.y});
      j["pair_motions"].push_back({{"ref", m.ref_index},
                                   {"tar", m.tar_index},
                                   {"h_offsets", o},
                                   {"h", four_pt_to_matrix(m.h_offsets).row_major()},
                                   {"rows", m.rows},
                                   {"cols", m.cols},
                                   {"residual", flat(m.residual)},
                                   {"loss", report_json(m.report)}});
    }
  };
  add_pairs(r.left);
  add_pairs(r.right);
  j["global_warps"] = json::array();
  for (std::size_t i = 0; i < r.global.size(); ++i) {
    const auto& g = r.global[i];
    j["global_warps"].push_back({{"image", g.image_index},
                                 {"h", g.h.row_major()},
                                 {"rows", g.rows},
                                 {"cols", g.cols},
                                 {"residual", flat(g.residual)},
                                 {"grid", flat(r.layout.grids[i].points)},
                                 {"grid_loss", report_json(r.grid_losses[i])}});
  }
  j["offset"] = {r.layout.offset.x, r.layout.offset.y};
  j["canvas"] = {r.layout.canvas.width(), r.layout.canvas.height()};
  return j.dump(2) + "\n";
}

MetricRow metric_row(const StitchResult& r, const StitchConfig& cfg) {
  MetricRow row;
  row.set = r.set_id;
  row.n_images = static_cast<int>(r.frames.size());
  row.psnr = r.scores.psnr;
  row.ssim = r.scores.ssim;
  row.toggles = cfg.toggles.label();
  return row;
}

void write_stitch_artifacts(const fs::path& dir, const StitchResult& r, const StitchConfig& cfg) {
  fs::create_directories(dir);
  save_image(dir / "panorama.png", r.panorama.image);
  for (std::size_t i = 0; i < r.warped.size(); ++i) {
    save_image(dir / ("warped_" + std::to_string(i) + ".png"), r.warped[i]);
    save_mask(dir / ("mask_" + std::to_string(i) + ".png"), r.warped[i]);
  }
  {
    std::ofstream out(dir / "motions.json");
    if (!out) fail(ErrorKind::LoadError, "cannot write " + (dir / "motions.json").string());
    out << motions_json(r, cfg);
  }
  std::vector<MetricRow> rows = {metric_row(r, cfg)};
  bucketize(rows);
  std::ofstream csv(dir / "report.csv");
  write_csv(csv, rows);
}

}  // namespace svstitch
