#pragma once

// Shared fixtures for the unit and acceptance suites: deterministic smooth
// textures, random grids, and a central-difference gradient oracle.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <functional>
#include <random>
#include <vector>

#include "svstitch/geometry.hpp"
#include "svstitch/image.hpp"
#include "svstitch/mesh_warp.hpp"

namespace svtest {
using namespace svstitch;

// Sum of a few random sinusoids: smooth, textured, values in [0, 1].
struct SmoothField {
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves[3];

  SmoothField(unsigned seed, double min_period = 12.0, double max_period = 60.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> per(min_period, max_period);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    for (auto& ch : waves) {
      for (int i = 0; i < 5; ++i) {
        const double p = per(rng), a = ang(rng);
        ch.push_back({2 * M_PI / p * std::cos(a), 2 * M_PI / p * std::sin(a), ang(rng), 0.09});
      }
    }
  }

  double operator()(double x, double y, int c) const {
    double v = 0.5;
    for (const auto& w : waves[c]) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return std::clamp(v, 0.0, 1.0);
  }
};

// Rasterizes a field with pixel samples at (x + 0.5 + ox, y + 0.5 + oy).
inline MaskedImage render(const SmoothField& f, int w, int h, int channels,
                          double ox = 0.0, double oy = 0.0) {
  MaskedImage img(w, h, channels, 0.0, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = f(x + 0.5 + ox, y + 0.5 + oy, c);
  return img;
}

inline ControlGrid jitter(const ControlGrid& g, double amp, std::mt19937& rng) {
  std::uniform_real_distribution<double> d(-amp, amp);
  ControlGrid out = g;
  for (auto& p : out.points) p += Vec2{d(rng), d(rng)};
  return out;
}

// Central differences of f with respect to every control point coordinate.
inline std::vector<Vec2> numeric_gradient(const ControlGrid& g,
                                          const std::function<double(const ControlGrid&)>& f,
                                          double h = 1e-4) {
  std::vector<Vec2> out(g.size());
  ControlGrid probe = g;
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (int axis = 0; axis < 2; ++axis) {
      double& v = axis == 0 ? probe.points[k].x : probe.points[k].y;
      const double orig = v;
      v = orig + h;
      const double fp = f(probe);
      v = orig - h;
      const double fm = f(probe);
      v = orig;
      (axis == 0 ? out[k].x : out[k].y) = (fp - fm) / (2 * h);
    }
  }
  return out;
}

inline double relative_error(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += dot(a[i] - b[i], a[i] - b[i]);
    den += dot(b[i], b[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// Fresh directory under the system temp dir, removed with its contents on
// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("svstitch_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace svtest
