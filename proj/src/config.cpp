#include "svstitch/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svstitch/errors.hpp"

namespace svstitch {

using nlohmann::json;

namespace {

[[noreturn]] void unknown(const std::string& where, const std::string& key) {
  fail(ErrorKind::InvalidConfig, "unknown config key '" + where + key + "'");
}

void apply_weights(const json& j, LossWeights& w) {
  for (const auto& [k, v] : j.items()) {
    if (k == "alpha") w.alpha = v.get<double>();
    else if (k == "beta") w.beta = v.get<double>();
    else if (k == "gamma") w.gamma = v.get<double>();
    else if (k == "gamma1") w.gamma1 = v.get<double>();
    else if (k == "gamma2") w.gamma2 = v.get<double>();
    else if (k == "gamma3") w.gamma3 = v.get<double>();
    else unknown("weights.", k);
  }
}

void apply_seam(const json& j, SeamOptions& s) {
  for (const auto& [k, v] : j.items()) {
    if (k == "feather") s.feather = v.get<int>();
    else if (k == "horizontal") s.horizontal = v.get<bool>();
    else unknown("seam.", k);
  }
}

}  // namespace

void validate(const StitchConfig& cfg) {
  validate(effective_align_config(cfg));
  if (cfg.seam.feather < 0) fail(ErrorKind::InvalidConfig, "seam feather must be non-negative");
  if (cfg.jobs < 1) fail(ErrorKind::InvalidConfig, "jobs must be at least 1");
}

void apply_config_json(const std::string& text, StitchConfig& cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
  AlignConfig& a = cfg.align;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "grid") {
        const auto g = v.get<std::vector<int>>();
        if (g.size() != 2) fail(ErrorKind::InvalidConfig, "grid must be [u, v]");
        a.grid_u = g[0];
        a.grid_v = g[1];
      } else if (k == "pyramid_scales") a.pyramid_scales = v.get<std::vector<double>>();
      else if (k == "homography_levels") a.homography_levels = v.get<int>();
      else if (k == "mesh_levels") a.mesh_levels = v.get<int>();
      else if (k == "max_iters_homography") a.max_iters_homography = v.get<int>();
      else if (k == "max_iters_mesh") a.max_iters_mesh = v.get<int>();
      else if (k == "max_step_homography") a.max_step_homography = v.get<double>();
      else if (k == "max_step_mesh") a.max_step_mesh = v.get<double>();
      else if (k == "tol") a.tol = v.get<double>();
      else if (k == "seed_translation") a.seed_translation = v.get<bool>();
      else if (k == "seed_scale") a.seed_scale = v.get<double>();
      else if (k == "min_overlap_fraction") a.min_overlap_fraction = v.get<double>();
      else if (k == "min_match_ratio") a.min_match_ratio = v.get<double>();
      else if (k == "min_overlap_correlation") a.min_overlap_correlation = v.get<double>();
      else if (k == "weights") apply_weights(v, a.weights);
      else if (k == "seam") apply_seam(v, cfg.seam);
      else if (k == "cylindrical") cfg.toggles.cylindrical = v.get<bool>();
      else if (k == "shape") cfg.toggles.shape = v.get<bool>();
      else if (k == "size") cfg.toggles.size = v.get<bool>();
      else if (k == "fold") cfg.toggles.fold = v.get<bool>();
      else if (k == "jobs") cfg.jobs = v.get<int>();
      else unknown("", k);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  validate(cfg);
}

StitchConfig read_stitch_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::InvalidConfig, "cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  StitchConfig cfg;
  try {
    apply_config_json(ss.str(), cfg);
  } catch (const Error& e) {
    fail(e.kind(), file.string() + ": " + e.what());
  }
  return cfg;
}

std::string config_json(const StitchConfig& cfg) {
  const AlignConfig& a = cfg.align;
  const LossWeights& w = a.weights;
  json j;
  j["grid"] = {a.grid_u, a.grid_v};
  j["pyramid_scales"] = a.pyramid_scales;
  j["homography_levels"] = a.homography_levels;
  j["mesh_levels"] = a.mesh_levels;
  j["max_iters_homography"] = a.max_iters_homography;
  j["max_iters_mesh"] = a.max_iters_mesh;
  j["max_step_homography"] = a.max_step_homography;
  j["max_step_mesh"] = a.max_step_mesh;
  j["tol"] = a.tol;
  j["seed_translation"] = a.seed_translation;
  j["seed_scale"] = a.seed_scale;
  j["min_overlap_fraction"] = a.min_overlap_fraction;
  j["min_match_ratio"] = a.min_match_ratio;
  j["min_overlap_correlation"] = a.min_overlap_correlation;
  j["weights"] = {{"alpha", w.alpha}, {"beta", w.beta},     {"gamma", w.gamma},
                  {"gamma1", w.gamma1}, {"gamma2", w.gamma2}, {"gamma3", w.gamma3}};
  j["seam"] = {{"feather", cfg.seam.feather}, {"horizontal", cfg.seam.horizontal}};
  j["cylindrical"] = cfg.toggles.cylindrical;
  j["shape"] = cfg.toggles.shape;
  j["size"] = cfg.toggles.size;
  j["fold"] = cfg.toggles.fold;
  j["jobs"] = cfg.jobs;
  return j.dump(2) + "\n";
}

}  // namespace svstitch
