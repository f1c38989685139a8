#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "svstitch/camera.hpp"
#include "svstitch/geometry.hpp"
#include "svstitch/image.hpp"

namespace svstitch {

// Images of one rig in left-to-right order.
struct SurroundSet {
  std::string id;
  std::vector<MaskedImage> images;
  std::vector<CameraIntrinsics> intrinsics;
  int center_index = 0;
  bool cylindrical = true;  // project onto the cylinder before alignment
};

// Contents of set.json. Paths in `images` are relative to `root`.
struct SetManifest {
  std::filesystem::path root;
  std::vector<std::string> images;
  std::vector<CameraIntrinsics> intrinsics;  // empty or one per image
  std::vector<std::array<double, 9>> gt_warps;  // empty or one per image
  bool cylindrical = true;
  std::string reference;       // optional reference image, relative to root
  std::string reference_mask;  // optional
};

inline constexpr const char* kManifestName = "set.json";

// Reads `path`, which is either a set.json file or a directory. A directory
// with a set.json uses it; otherwise its PNG/JPEG files in name order form
// the set. Throws LoadError.
SetManifest read_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& file, const SetManifest& m);

// Decodes every image (in parallel when jobs > 1) with all-ones masks.
// Missing intrinsics default to CameraIntrinsics::default_for. Throws
// LoadError naming the offending file, or when fewer than 2 images are listed.
SurroundSet load_set(const SetManifest& m, int jobs = 1);

enum class SynthProjection { Planar, Cylindrical };

struct SynthSpec {
  std::string panorama;  // source image; empty selects a procedural texture
  int n_views = 5;
  double overlap_ratio = 0.15;
  int view_width = 512;
  int view_height = 384;
  double perturbation = 8.0;  // largest corner offset of the per-view homography, px
  std::uint64_t seed = 1;
  // Planar views are perspective-perturbed crops of a flat panorama.
  // Cylindrical views are pinhole images of a textured cylinder around the
  // rig; they become perturbed crops once projected with `focal`.
  SynthProjection projection = SynthProjection::Planar;
  double focal = 0.0;  // px; 0 means 0.8 * view_width
};

// Throws InvalidSpec.
void validate(const SynthSpec& s);

// Reads a SynthSpec from JSON; absent keys keep their defaults.
SynthSpec read_synth_spec(const std::filesystem::path& file);

struct SynthOutput {
  SurroundSet set;
  // View frame (after projection, if any) -> reference frame, per view.
  std::vector<Homography> gt_warps;
  MaskedImage reference;  // panorama region covered by the views
};

// Deterministic for a given spec. Throws InvalidSpec when the source
// panorama is too small for the requested views.
SynthOutput synth_generate(const SynthSpec& spec);

// Writes view_<i>.png, reference.png, reference_mask.png and set.json into
// `dir` and returns the manifest.
SetManifest write_synth(const std::filesystem::path& dir, const SynthOutput& out,
                        const SynthSpec& spec);

// The frame the pipeline aligns in: the cylindrical projection of the image
// when `cylindrical` is set, the image itself otherwise.
MaskedImage stage_one(const MaskedImage& img, const CameraIntrinsics& k, bool cylindrical);

}  // namespace svstitch
