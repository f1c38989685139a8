#include "svstitch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "svstitch/errors.hpp"
#include "svstitch/image_io.hpp"
#include "svstitch/mesh_warp.hpp"
#include "svstitch/parallel.hpp"

namespace svstitch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

json read_json(const fs::path& file, ErrorKind kind) {
  std::ifstream in(file);
  if (!in) fail(kind, "cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(kind, file.string() + ": " + e.what());
  }
}

// Uniform double in [0, 1) from the top 53 bits, independent of the
// standard library's distribution implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Smooth multi-octave value noise on a lattice, evaluated analytically so
// views can be rendered at arbitrary subpixel positions.
class NoiseTexture {
 public:
  NoiseTexture(std::uint64_t seed, double width, double height) {
    std::mt19937_64 rng(seed);
    const double periods[] = {96.0, 48.0, 24.0, 12.0};
    const double amps[] = {0.45, 0.3, 0.2, 0.12};
    for (auto& layer : layers_) {
      for (int o = 0; o < 4; ++o) {
        Octave oc;
        oc.period = periods[o];
        oc.amp = amps[o];
        oc.nx = static_cast<int>(std::ceil(width / oc.period)) + 3;
        oc.ny = static_cast<int>(std::ceil(height / oc.period)) + 3;
        oc.lattice.resize(static_cast<std::size_t>(oc.nx) * oc.ny);
        for (auto& v : oc.lattice) v = unit(rng);
        layer.push_back(std::move(oc));
      }
    }
  }

  void operator()(double x, double y, double* rgb) const {
    const double lum = eval(layers_[0], x, y);
    for (int c = 0; c < 3; ++c)
      rgb[c] = std::clamp(0.5 + 1.3 * (lum - 0.5) + 0.35 * (eval(layers_[c + 1], x, y) - 0.5),
                          0.0, 1.0);
  }

 private:
  struct Octave {
    double period = 1.0, amp = 1.0;
    int nx = 0, ny = 0;
    std::vector<double> lattice;
  };

  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

  static double eval(const std::vector<Octave>& layer, double x, double y) {
    double v = 0.0, total = 0.0;
    for (const auto& o : layer) {
      const double gx = x / o.period + 1.0, gy = y / o.period + 1.0;
      const double fx = std::floor(gx), fy = std::floor(gy);
      const int ix = std::clamp(static_cast<int>(fx), 0, o.nx - 2);
      const int iy = std::clamp(static_cast<int>(fy), 0, o.ny - 2);
      const double tx = fade(std::clamp(gx - ix, 0.0, 1.0));
      const double ty = fade(std::clamp(gy - iy, 0.0, 1.0));
      const auto at = [&](int i, int j) { return o.lattice[static_cast<std::size_t>(j) * o.nx + i]; };
      const double top = at(ix, iy) + tx * (at(ix + 1, iy) - at(ix, iy));
      const double bot = at(ix, iy + 1) + tx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
      v += o.amp * (top + ty * (bot - top));
      total += o.amp;
    }
    return v / total;
  }

  std::vector<Octave> layers_[4];
};

// Colour source for the synthetic panorama: a decoded image or the noise.
struct PanoramaSource {
  std::optional<MaskedImage> image;
  std::optional<NoiseTexture> noise;

  void operator()(const Vec2& p, double* rgb) const {
    if (noise) return (*noise)(p.x, p.y, rgb);
    const Sample s = sample_bilinear(*image, p.x, p.y);
    for (int c = 0; c < 3; ++c) rgb[c] = s.value[image->channels == 3 ? c : 0];
  }
};

}  // namespace

SetManifest read_manifest(const fs::path& path) {
  fs::path file = path;
  if (fs::is_directory(path)) {
    file = path / kManifestName;
    if (!fs::exists(file)) {
      SetManifest m;
      m.root = path;
      for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && is_image_file(e.path())) m.images.push_back(e.path().filename().string());
      std::sort(m.images.begin(), m.images.end());
      if (m.images.empty()) fail(ErrorKind::LoadError, "no images in " + path.string());
      return m;
    }
  }
  const json j = read_json(file, ErrorKind::LoadError);
  SetManifest m;
  m.root = file.parent_path();
  try {
    if (!j.contains("images") || !j["images"].is_array())
      fail(ErrorKind::LoadError, file.string() + ": missing 'images' array");
    m.images = j["images"].get<std::vector<std::string>>();
    if (j.contains("intrinsics")) {
      for (const auto& k : j["intrinsics"])
        m.intrinsics.push_back({k.at("fx").get<double>(), k.at("fy").get<double>(),
                                k.at("cx").get<double>(), k.at("cy").get<double>()});
    }
    if (j.contains("gt_warps")) m.gt_warps = j["gt_warps"].get<std::vector<std::array<double, 9>>>();
    m.cylindrical = j.value("cylindrical", true);
    m.reference = j.value("reference", std::string());
    m.reference_mask = j.value("reference_mask", std::string());
  } catch (const json::exception& e) {
    fail(ErrorKind::LoadError, file.string() + ": " + e.what());
  }
  if (!m.intrinsics.empty() && m.intrinsics.size() != m.images.size())
    fail(ErrorKind::LoadError, file.string() + ": intrinsics count differs from image count");
  if (!m.gt_warps.empty() && m.gt_warps.size() != m.images.size())
    fail(ErrorKind::LoadError, file.string() + ": gt_warps count differs from image count");
  return m;
}

void write_manifest(const fs::path& file, const SetManifest& m) {
  json j;
  j["images"] = m.images;
  if (!m.intrinsics.empty()) {
    j["intrinsics"] = json::array();
    for (const auto& k : m.intrinsics)
      j["intrinsics"].push_back({{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}});
  }
  if (!m.gt_warps.empty()) j["gt_warps"] = m.gt_warps;
  j["cylindrical"] = m.cylindrical;
  if (!m.reference.empty()) j["reference"] = m.reference;
  if (!m.reference_mask.empty()) j["reference_mask"] = m.reference_mask;
  std::ofstream out(file);
  if (!out) fail(ErrorKind::LoadError, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

SurroundSet load_set(const SetManifest& m, int jobs) {
  const int n = static_cast<int>(m.images.size());
  if (n < 2) fail(ErrorKind::LoadError, "a set needs at least 2 images, manifest lists " + std::to_string(n));
  SurroundSet s;
  s.id = m.root.filename().string();
  if (s.id.empty()) s.id = m.root.parent_path().filename().string();
  s.images.resize(n);
  parallel_for(n, jobs, [&](int i) {
    const fs::path p = m.root / m.images[i];
    if (!fs::exists(p)) fail(ErrorKind::LoadError, "missing image file " + p.string());
    s.images[i] = load_image(p);
  });
  for (int i = 0; i < n; ++i) {
    s.intrinsics.push_back(m.intrinsics.empty()
                               ? CameraIntrinsics::default_for(s.images[i].width, s.images[i].height)
                               : m.intrinsics[i]);
    validate(s.intrinsics.back());
  }
  s.center_index = (n - 1) / 2;
  s.cylindrical = m.cylindrical;
  return s;
}

void validate(const SynthSpec& s) {
  if (s.n_views < 2) fail(ErrorKind::InvalidSpec, "n_views must be at least 2");
  if (!(s.overlap_ratio > 0.0 && s.overlap_ratio < 1.0))
    fail(ErrorKind::InvalidSpec, "overlap_ratio must lie in (0, 1)");
  if (s.view_width < 16 || s.view_height < 16)
    fail(ErrorKind::InvalidSpec, "views must be at least 16x16");
  if (!(s.perturbation >= 0.0) || !std::isfinite(s.perturbation))
    fail(ErrorKind::InvalidSpec, "perturbation must be finite and non-negative");
  if (!(s.focal >= 0.0) || !std::isfinite(s.focal))
    fail(ErrorKind::InvalidSpec, "focal must be finite and non-negative");
}

SynthSpec read_synth_spec(const fs::path& file) {
  const json j = read_json(file, ErrorKind::InvalidSpec);
  SynthSpec s;
  try {
    s.panorama = j.value("panorama", s.panorama);
    if (!s.panorama.empty() && fs::path(s.panorama).is_relative())
      s.panorama = (file.parent_path() / s.panorama).string();
    s.n_views = j.value("n_views", s.n_views);
    s.overlap_ratio = j.value("overlap_ratio", s.overlap_ratio);
    s.view_width = j.value("view_width", s.view_width);
    s.view_height = j.value("view_height", s.view_height);
    s.perturbation = j.value("perturbation", s.perturbation);
    s.seed = j.value("seed", s.seed);
    s.focal = j.value("focal", s.focal);
    const std::string proj = j.value("projection", std::string("planar"));
    if (proj == "planar") s.projection = SynthProjection::Planar;
    else if (proj == "cylindrical") s.projection = SynthProjection::Cylindrical;
    else fail(ErrorKind::InvalidSpec, "projection must be 'planar' or 'cylindrical'");
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidSpec, file.string() + ": " + e.what());
  }
  validate(s);
  return s;
}

MaskedImage stage_one(const MaskedImage& img, const CameraIntrinsics& k, bool cylindrical) {
  if (!cylindrical) return img;
  return cylindrical_warp(img, k, make_cylindrical_config(k, img.width, img.height));
}

SynthOutput synth_generate(const SynthSpec& spec) {
  validate(spec);
  const int W = spec.view_width, H = spec.view_height;
  const bool cyl = spec.projection == SynthProjection::Cylindrical;
  CameraIntrinsics k = CameraIntrinsics::default_for(W, H);
  if (spec.focal > 0.0) k.fx = k.fy = spec.focal;
  std::optional<CylindricalConfig> cc;
  if (cyl) cc = make_cylindrical_config(k, W, H);

  // Frame the pipeline aligns in, and its placement on the panorama.
  const double fw = cyl ? cc->out_width : W, fh = cyl ? cc->out_height : H;
  const double stride = fw * (1.0 - spec.overlap_ratio);
  const double margin = std::ceil(spec.perturbation) + 2.0;
  const double pano_w = 2 * margin + (spec.n_views - 1) * stride + fw;
  const double pano_h = 2 * margin + fh;

  std::mt19937_64 rng(spec.seed);
  PanoramaSource source;
  if (spec.panorama.empty()) {
    source.noise.emplace(rng(), pano_w, pano_h);
  } else {
    MaskedImage img;
    try {
      img = load_image(spec.panorama);
    } catch (const Error& e) {
      fail(ErrorKind::InvalidSpec, e.what());
    }
    if (img.width < pano_w || img.height < pano_h)
      fail(ErrorKind::InvalidSpec, "panorama " + spec.panorama + " is " + std::to_string(img.width) +
                                       "x" + std::to_string(img.height) + ", views need " +
                                       std::to_string(static_cast<int>(std::ceil(pano_w))) + "x" +
                                       std::to_string(static_cast<int>(std::ceil(pano_h))));
    source.image = std::move(img);
  }

  SynthOutput out;
  std::vector<Homography> to_pano;
  const double r = spec.perturbation / std::sqrt(2.0);
  for (int v = 0; v < spec.n_views; ++v) {
    FourPtOffsets o;
    o.source_width = fw;
    o.source_height = fh;
    for (auto& c : o.offsets) {
      const double dx = (2 * unit(rng) - 1) * r;
      const double dy = (2 * unit(rng) - 1) * r;
      c = {dx, dy};
    }
    to_pano.push_back(Homography::translation(margin + v * stride, margin) * four_pt_to_matrix(o));
  }

  // Coverage of the panorama by the views decides the reference box.
  const int pw = static_cast<int>(std::ceil(pano_w)), ph = static_cast<int>(std::ceil(pano_h));
  std::vector<double> cover(static_cast<std::size_t>(pw) * ph, 0.0);
  std::vector<Homography> inv;
  for (const auto& g : to_pano) inv.push_back(g.inverse());
  int x0 = pw, y0 = ph, x1 = 0, y1 = 0;
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      for (const auto& hi : inv) {
        const Vec2 q = hi.map(p);
        if (q.x < 0 || q.y < 0 || q.x > fw || q.y > fh) continue;
        if (cyl) {
          const auto s = backward_project(q, k, *cc);
          if (!s || s->x < 0 || s->y < 0 || s->x > W || s->y > H) continue;
        }
        cover[static_cast<std::size_t>(y) * pw + x] = 1.0;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
        break;
      }
    }

  out.reference = MaskedImage(x1 - x0, y1 - y0, 3);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      double rgb[3];
      source({x + 0.5, y + 0.5}, rgb);
      for (int c = 0; c < 3; ++c) out.reference.at(x - x0, y - y0, c) = rgb[c];
      out.reference.mask_at(x - x0, y - y0) = cover[static_cast<std::size_t>(y) * pw + x];
    }
  const Homography to_ref = Homography::translation(-x0, -y0);

  out.set.id = "synth";
  out.set.cylindrical = cyl;
  out.set.center_index = (spec.n_views - 1) / 2;
  for (int v = 0; v < spec.n_views; ++v) {
    MaskedImage img(W, H, 3, 0.0, 1.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        Vec2 q{x + 0.5, y + 0.5};
        if (cyl) q = forward_project(q, k, *cc);
        double rgb[3];
        source(to_pano[v].map(q), rgb);
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
      }
    out.set.images.push_back(std::move(img));
    out.set.intrinsics.push_back(k);
    out.gt_warps.push_back(to_ref * to_pano[v]);
  }
  return out;
}

SetManifest write_synth(const fs::path& dir, const SynthOutput& out, const SynthSpec& spec) {
  fs::create_directories(dir);
  SetManifest m;
  m.root = dir;
  for (std::size_t i = 0; i < out.set.images.size(); ++i) {
    m.images.push_back("view_" + std::to_string(i) + ".png");
    save_image(dir / m.images.back(), out.set.images[i]);
    m.gt_warps.push_back(out.gt_warps[i].row_major());
  }
  m.cylindrical = spec.projection == SynthProjection::Cylindrical;
  if (m.cylindrical) m.intrinsics = out.set.intrinsics;
  m.reference = "reference.png";
  m.reference_mask = "reference_mask.png";
  save_image(dir / m.reference, out.reference);
  save_mask(dir / m.reference_mask, out.reference);
  write_manifest(dir / kManifestName, m);
  return m;
}

}  // namespace svstitch
