#pragma once

#include <filesystem>
#include <string>

#include "svstitch/pipeline.hpp"

namespace svstitch {

// Applies the keys of a JSON object onto `cfg`; absent keys keep their
// values. Recognized keys:
//   grid [u, v], pyramid_scales, homography_levels, mesh_levels,
//   max_iters_homography, max_iters_mesh, max_step_homography,
//   max_step_mesh, tol, seed_translation, seed_scale, min_overlap_fraction,
//   min_match_ratio, min_overlap_correlation,
//   weights {alpha, beta, gamma, gamma1, gamma2, gamma3},
//   seam {feather, horizontal},
//   cylindrical, shape, size, fold (toggles), jobs.
// Unknown keys and wrong types throw InvalidConfig, as does a result that
// fails validation.
void apply_config_json(const std::string& text, StitchConfig& cfg);

// apply_config_json on the contents of `file` over the defaults.
StitchConfig read_stitch_config(const std::filesystem::path& file);

// The full configuration as JSON, in the layout apply_config_json reads.
std::string config_json(const StitchConfig& cfg);

// Throws InvalidConfig.
void validate(const StitchConfig& cfg);

}  // namespace svstitch
