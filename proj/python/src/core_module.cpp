#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "svstitch/camera.hpp"
#include "svstitch/config.hpp"
#include "svstitch/dataset.hpp"
#include "svstitch/errors.hpp"
#include "svstitch/eval.hpp"
#include "svstitch/mesh_warp.hpp"
#include "svstitch/metrics.hpp"
#include "svstitch/pair_align.hpp"
#include "svstitch/pipeline.hpp"

namespace py = pybind11;
using namespace svstitch;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) float array in [0, 1] plus an optional (H, W) mask;
// the mask defaults to all ones.
MaskedImage to_image(const Array& a, const std::optional<Array>& mask) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  MaskedImage img(w, h, c, 0.0, 1.0);
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  if (mask) {
    if (mask->ndim() != 2 || mask->shape(0) != h || mask->shape(1) != w)
      throw std::invalid_argument("mask must be (H, W) and match the image");
    std::copy(mask->data(), mask->data() + mask->size(), img.mask.begin());
  }
  validate(img);
  return img;
}

py::array_t<double> pixels_of(const MaskedImage& img) {
  std::vector<py::ssize_t> shape = {img.height, img.width};
  if (img.channels > 1) shape.push_back(img.channels);
  py::array_t<double> out(shape);
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

py::array_t<double> mask_of(const MaskedImage& img) {
  py::array_t<double> out({img.height, img.width});
  std::copy(img.mask.begin(), img.mask.end(), out.mutable_data());
  return out;
}

py::array_t<double> matrix_of(const Homography& h) {
  py::array_t<double> out({3, 3});
  const auto v = h.row_major();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Homography homography_from(const Array& m) {
  if (m.ndim() != 2 || m.shape(0) != 3 || m.shape(1) != 3) throw std::invalid_argument("expected a 3x3 matrix");
  std::array<double, 9> v;
  std::copy(m.data(), m.data() + 9, v.begin());
  return Homography::from_row_major(v);
}

py::array_t<double> points_of(const std::vector<Vec2>& p) {
  py::array_t<double> out({static_cast<py::ssize_t>(p.size()), py::ssize_t{2}});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < p.size(); ++i) {
    r(i, 0) = p[i].x;
    r(i, 1) = p[i].y;
  }
  return out;
}

StitchConfig config_from(const std::optional<std::string>& json) {
  StitchConfig cfg;
  if (json) apply_config_json(*json, cfg);
  return cfg;
}

py::dict loss_dict(const LossReport& l) {
  py::dict d;
  d["alignment"] = l.alignment;
  d["distortion"] = l.distortion;
  d["shape"] = l.shape;
  d["size"] = l.size;
  d["fold"] = l.fold;
  d["total"] = l.total;
  return d;
}

py::dict result_dict(const StitchResult& r, const StitchConfig& cfg) {
  py::dict d;
  d["panorama"] = pixels_of(r.panorama.image);
  d["panorama_mask"] = mask_of(r.panorama.image);
  py::list warped, masks;
  for (const auto& w : r.warped) {
    warped.append(pixels_of(w));
    masks.append(mask_of(w));
  }
  d["warped"] = warped;
  d["masks"] = masks;
  d["psnr"] = r.scores.psnr;
  d["ssim"] = r.scores.ssim;
  d["pair_psnr"] = r.scores.pair_psnr;
  d["pair_ssim"] = r.scores.pair_ssim;
  d["motions_json"] = motions_json(r, cfg);
  return d;
}

SurroundSet set_from(const std::vector<Array>& images, bool cylindrical, const std::string& id) {
  SurroundSet set;
  set.id = id;
  set.cylindrical = cylindrical;
  for (const auto& a : images) {
    set.images.push_back(to_image(a, std::nullopt));
    set.intrinsics.push_back(CameraIntrinsics::default_for(set.images.back().width, set.images.back().height));
  }
  set.center_index = (static_cast<int>(set.images.size()) - 1) / 2;
  return set;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Surround-view panorama stitching";

  // Leaked on purpose: the type must outlive module teardown.
  static auto* error = new py::exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error->ptr())(std::string(to_string(e.kind())) + ": " + e.what());
      exc.attr("kind") = to_string(e.kind());
      PyErr_SetObject(error->ptr(), exc.ptr());
    }
  });

  m.def(
      "cylindrical_project",
      [](const Array& image, double fx, double fy, double cx, double cy) {
        const MaskedImage img = to_image(image, std::nullopt);
        const CameraIntrinsics k{fx, fy, cx, cy};
        validate(k);
        const MaskedImage out = cylindrical_warp(img, k, make_cylindrical_config(k, img.width, img.height));
        return py::make_tuple(pixels_of(out), mask_of(out));
      },
      py::arg("image"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
      "Projects an image onto the unrolled cylinder of radius fx. Returns (image, mask).");

  m.def(
      "four_pt_to_matrix",
      [](const Array& offsets, double width, double height) {
        if (offsets.ndim() != 2 || offsets.shape(0) != 4 || offsets.shape(1) != 2)
          throw std::invalid_argument("offsets must be (4, 2): TL, TR, BL, BR");
        FourPtOffsets o;
        o.source_width = width;
        o.source_height = height;
        for (int i = 0; i < 4; ++i) o.offsets[i] = {offsets.at(i, 0), offsets.at(i, 1)};
        return matrix_of(four_pt_to_matrix(o));
      },
      py::arg("offsets"), py::arg("width"), py::arg("height"),
      "Homography moving each frame corner by its offset.");

  m.def(
      "estimate_pair",
      [](const Array& ref, const Array& tar, std::optional<std::string> config, int direction_hint) {
        const StitchConfig cfg = config_from(config);
        AlignConfig a = effective_align_config(cfg);
        a.direction_hint = direction_hint;
        const PairMotion pm = [&] {
          py::gil_scoped_release release;
          return estimate_pair_motion(to_image(ref, std::nullopt), to_image(tar, std::nullopt), a);
        }();
        py::dict d;
        d["h"] = matrix_of(four_pt_to_matrix(pm.h_offsets));
        d["h_offsets"] = points_of({pm.h_offsets.offsets.begin(), pm.h_offsets.offsets.end()});
        d["residual"] = points_of(pm.residual);
        d["grid"] = points_of(motion_destination_grid(pm).points);
        d["loss"] = loss_dict(pm.report);
        return d;
      },
      py::arg("ref"), py::arg("tar"), py::arg("config") = py::none(), py::arg("direction_hint") = 1,
      "Aligns tar to ref. direction_hint: +1 tar right of ref, -1 left, 0 unknown.");

  m.def(
      "stitch",
      [](const std::vector<Array>& images, std::optional<std::string> config, bool cylindrical) {
        const StitchConfig cfg = config_from(config);
        const SurroundSet set = set_from(images, cylindrical, "python");
        StitchResult r;
        {
          py::gil_scoped_release release;
          r = stitch_set(set, cfg);
        }
        return result_dict(r, cfg);
      },
      py::arg("images"), py::arg("config") = py::none(), py::arg("cylindrical") = true,
      "Stitches images given left to right. config is a JSON string in the config.json layout.");

  m.def(
      "stitch_dir",
      [](const std::filesystem::path& set_path, const std::filesystem::path& out,
         std::optional<std::string> config) {
        const StitchConfig cfg = config_from(config);
        py::gil_scoped_release release;
        const StitchResult r = stitch_set(load_set(read_manifest(set_path), cfg.jobs), cfg);
        write_stitch_artifacts(out, r, cfg);
        return std::pair<double, double>{r.scores.psnr, r.scores.ssim};
      },
      py::arg("set_path"), py::arg("out"), py::arg("config") = py::none(),
      "Stitches a set directory or set.json and writes the artifacts. Returns (psnr, ssim).");

  m.def(
      "synth",
      [](int n_views, double overlap_ratio, int view_width, int view_height, double perturbation,
         std::uint64_t seed, bool cylindrical) {
        SynthSpec s;
        s.n_views = n_views;
        s.overlap_ratio = overlap_ratio;
        s.view_width = view_width;
        s.view_height = view_height;
        s.perturbation = perturbation;
        s.seed = seed;
        s.projection = cylindrical ? SynthProjection::Cylindrical : SynthProjection::Planar;
        const SynthOutput out = synth_generate(s);
        py::dict d;
        py::list views, warps;
        for (const auto& v : out.set.images) views.append(pixels_of(v));
        for (const auto& g : out.gt_warps) warps.append(matrix_of(g));
        d["views"] = views;
        d["gt_warps"] = warps;
        d["reference"] = pixels_of(out.reference);
        d["reference_mask"] = mask_of(out.reference);
        return d;
      },
      py::arg("n_views") = 5, py::arg("overlap_ratio") = 0.15, py::arg("view_width") = 512,
      py::arg("view_height") = 384, py::arg("perturbation") = 8.0, py::arg("seed") = 1,
      py::arg("cylindrical") = false,
      "Synthetic views with ground-truth warps into the reference frame.");

  m.def(
      "render_ground_truth",
      [](const std::vector<Array>& images, const std::vector<Array>& gt_warps, std::optional<std::string> config,
         bool cylindrical) {
        const StitchConfig cfg = config_from(config);
        const SurroundSet set = set_from(images, cylindrical, "ground-truth");
        std::vector<Homography> g;
        std::vector<std::pair<int, int>> sizes;
        for (std::size_t i = 0; i < gt_warps.size(); ++i) {
          g.push_back(homography_from(gt_warps[i]));
          const MaskedImage f = stage_one(set.images[i], set.intrinsics[i], cylindrical && cfg.toggles.cylindrical);
          sizes.emplace_back(f.width, f.height);
        }
        auto [left, right] = motions_from_warps(g, sizes, cfg.align.grid_u, cfg.align.grid_v);
        return result_dict(render_set(set, cfg, left, right), cfg);
      },
      py::arg("images"), py::arg("gt_warps"), py::arg("config") = py::none(), py::arg("cylindrical") = false,
      "The stitch result when the pair motions are the ground-truth homographies.");

  m.def(
      "psnr",
      [](const Array& a, const Array& b, std::optional<Array> mask_a, std::optional<Array> mask_b) {
        return psnr(to_image(a, mask_a), to_image(b, mask_b));
      },
      py::arg("a"), py::arg("b"), py::arg("mask_a") = py::none(), py::arg("mask_b") = py::none());
  m.def(
      "ssim",
      [](const Array& a, const Array& b, std::optional<Array> mask_a, std::optional<Array> mask_b) {
        return ssim(to_image(a, mask_a), to_image(b, mask_b));
      },
      py::arg("a"), py::arg("b"), py::arg("mask_a") = py::none(), py::arg("mask_b") = py::none());

  m.def(
      "bucketize",
      [](const std::vector<double>& psnrs) {
        std::vector<MetricRow> rows(psnrs.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].psnr = psnrs[i];
        bucketize(rows);
        std::vector<std::string> out;
        for (const auto& r : rows) out.emplace_back(to_string(r.bucket));
        return out;
      },
      py::arg("psnrs"), "Easy / Moderate / Hard label per PSNR, 30/40/30 by rank.");

  m.def(
      "load_run",
      [](const std::filesystem::path& dir) {
        const MetricRow r = load_run(dir);
        py::dict d;
        d["set"] = r.set;
        d["n"] = r.n_images;
        d["psnr"] = r.psnr;
        d["ssim"] = r.ssim;
        d["toggles"] = r.toggles;
        return d;
      },
      py::arg("dir"), "Metrics recomputed from a stitch output directory.");

  m.def("default_config", [] { return config_json(StitchConfig{}); },
        "The default configuration as a JSON string.");
}
