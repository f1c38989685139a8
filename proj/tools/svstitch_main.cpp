// svstitch: stitch | pair | synth | eval. Diagnostics go to stderr; every
// artifact is written under the requested output directory.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svstitch/config.hpp"
#include "svstitch/dataset.hpp"
#include "svstitch/errors.hpp"
#include "svstitch/eval.hpp"
#include "svstitch/image_io.hpp"
#include "svstitch/pipeline.hpp"

namespace fs = std::filesystem;
using namespace svstitch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAlignment = 3;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NoOverlap:
    case ErrorKind::OptimizationFailed:
    case ErrorKind::DegenerateChain:
    case ErrorKind::DegenerateWarp:
    case ErrorKind::SingularConfiguration:
      return kExitAlignment;
    default:
      return kExitConfig;
  }
}

struct CommonFlags {
  std::string config;
  bool no_cylindrical = false, no_shape = false, no_size = false, no_fold = false;
  std::optional<int> jobs;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override it")->check(CLI::ExistingFile);
  cmd->add_flag("--no-cylindrical", f.no_cylindrical, "skip the cylindrical projection");
  cmd->add_flag("--no-shape", f.no_shape, "disable the shape term");
  cmd->add_flag("--no-size", f.no_size, "disable the size term");
  cmd->add_flag("--no-fold", f.no_fold, "disable the fold term");
  cmd->add_option("--jobs,-j", f.jobs, "worker threads (default: $SVSTITCH_JOBS, then config, then 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--verbose,-v", f.verbose, "progress on stderr");
}

StitchConfig resolve(const CommonFlags& f) {
  StitchConfig cfg = f.config.empty() ? StitchConfig{} : read_stitch_config(f.config);
  if (f.no_cylindrical) cfg.toggles.cylindrical = false;
  if (f.no_shape) cfg.toggles.shape = false;
  if (f.no_size) cfg.toggles.size = false;
  if (f.no_fold) cfg.toggles.fold = false;
  if (f.jobs) {
    cfg.jobs = *f.jobs;
  } else if (const char* env = std::getenv("SVSTITCH_JOBS"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.jobs = std::stoi(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidConfig, std::string("SVSTITCH_JOBS is not an integer: ") + env);
    }
  }
  validate(cfg);
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void run_and_write(const SurroundSet& set, const StitchConfig& cfg, const fs::path& out, bool verbose) {
  const auto t0 = std::chrono::steady_clock::now();
  const StitchResult r = stitch_set(set, cfg);
  if (verbose) {
    std::cerr << "stitched " << set.images.size() << " images in " << seconds_since(t0) << " s, canvas "
              << r.layout.canvas.width() << "x" << r.layout.canvas.height() << "\n";
    for (std::size_t i = 0; i < r.scores.pair_psnr.size(); ++i)
      std::cerr << "  overlap " << i << "-" << i + 1 << ": psnr " << r.scores.pair_psnr[i] << " dB, ssim "
                << r.scores.pair_ssim[i] << "\n";
  }
  write_stitch_artifacts(out, r, cfg);
}

Toggles parse_toggles(const std::string& label) {
  Toggles t;
  if (label == "all") return t;
  std::size_t start = 0;
  while (start <= label.size()) {
    const std::size_t end = std::min(label.find('+', start), label.size());
    const std::string part = label.substr(start, end - start);
    if (part == "no-cylindrical") t.cylindrical = false;
    else if (part == "no-shape") t.shape = false;
    else if (part == "no-size") t.size = false;
    else if (part == "no-fold") t.fold = false;
    else fail(ErrorKind::InvalidConfig, "unknown toggle combination '" + label + "'");
    start = end + 1;
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surround-view panorama stitching"};
  app.require_subcommand(1);

  CommonFlags stitch_flags, pair_flags, eval_flags;
  std::string set_path, out_dir;
  auto* stitch = app.add_subcommand("stitch", "stitch a set (set.json or a directory of images)");
  stitch->add_option("set", set_path, "set.json or image directory")->required();
  stitch->add_option("--out,-o", out_dir, "output directory")->required();
  add_common(stitch, stitch_flags);

  std::string ref_path, tar_path;
  auto* pair = app.add_subcommand("pair", "stitch one image pair, tar to the right of ref");
  pair->add_option("ref", ref_path, "reference image")->required();
  pair->add_option("tar", tar_path, "target image")->required();
  pair->add_option("--out,-o", out_dir, "output directory")->required();
  add_common(pair, pair_flags);

  std::string spec_path;
  auto* synth = app.add_subcommand("synth", "generate a synthetic set with ground truth");
  synth->add_option("spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out,-o", out_dir, "output directory")->required();

  std::vector<std::string> inputs;
  bool ablation = false;
  std::vector<std::string> combos;
  auto* eval = app.add_subcommand("eval", "score stitch runs, or run the ablation over sets");
  eval->add_option("inputs", inputs, "stitch output directories (sets with --ablation)")->required();
  eval->add_option("--out,-o", out_dir, "output directory")->required();
  eval->add_flag("--ablation", ablation, "stitch each set under every toggle combination");
  eval->add_option("--combos", combos, "toggle combinations for --ablation, e.g. all no-shape+no-fold");
  add_common(eval, eval_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (stitch->parsed()) {
      const StitchConfig cfg = resolve(stitch_flags);
      const SurroundSet set = load_set(read_manifest(set_path), cfg.jobs);
      run_and_write(set, cfg, out_dir, stitch_flags.verbose);
    } else if (pair->parsed()) {
      const StitchConfig cfg = resolve(pair_flags);
      SurroundSet set;
      set.id = "pair";
      set.images = {load_image(ref_path), load_image(tar_path)};
      for (const auto& img : set.images)
        set.intrinsics.push_back(CameraIntrinsics::default_for(img.width, img.height));
      if (set.images[0].width != set.images[1].width || set.images[0].height != set.images[1].height)
        fail(ErrorKind::LoadError, "ref and tar must have the same size");
      run_and_write(set, cfg, out_dir, pair_flags.verbose);
    } else if (synth->parsed()) {
      const SynthSpec spec = read_synth_spec(spec_path);
      const SynthOutput out = synth_generate(spec);
      write_synth(out_dir, out, spec);
    } else if (eval->parsed()) {
      fs::create_directories(out_dir);
      if (ablation) {
        const StitchConfig cfg = resolve(eval_flags);
        std::vector<Toggles> toggles;
        for (const auto& c : combos) toggles.push_back(parse_toggles(c));
        if (toggles.empty()) toggles = all_toggle_combinations();
        std::vector<SurroundSet> sets;
        for (const auto& p : inputs) sets.push_back(load_set(read_manifest(p), cfg.jobs));
        const AblationReport rep = run_ablation(sets, toggles, cfg);
        for (const auto& c : rep.cells)
          if (!c.ok)
            std::cerr << "failed cell " << c.set << " n=" << c.n_images << " " << c.toggles.label() << ": "
                      << c.error << "\n";
        std::ofstream csv(fs::path(out_dir) / "ablation.csv");
        write_ablation_csv(csv, rep);
      } else {
        std::vector<fs::path> dirs(inputs.begin(), inputs.end());
        const auto rows = evaluate_runs(dirs);
        std::ofstream csv(fs::path(out_dir) / "report.csv");
        write_csv(csv, rows);
      }
    }
  } catch (const Error& e) {
    std::cerr << "svstitch: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "svstitch: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
