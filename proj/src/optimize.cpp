#include "svstitch/optimize.hpp"

#include <algorithm>
#include <cmath>

namespace svstitch {

DescentResult minimize(const Objective& f, Eigen::VectorXd x0, const DescentOptions& opt,
                       const Admissible& admissible) {
  DescentResult r;
  r.x = std::move(x0);
  Eigen::VectorXd g(r.x.size());
  r.value = f(r.x, &g);
  r.start_value = r.value;
  r.evaluations = 1;
  if (r.x.size() == 0) return r;

  double alpha = 0.0;
  Eigen::VectorXd x_prev, g_prev;
  for (int it = 0; it < opt.max_iters; ++it) {
    const double gmax = g.cwiseAbs().maxCoeff();
    if (!(gmax > 0.0)) break;
    if (x_prev.size()) {
      const Eigen::VectorXd s = r.x - x_prev, y = g - g_prev;
      const double sy = s.dot(y);
      alpha = sy > 0.0 ? s.squaredNorm() / sy : alpha * 2.0;
    } else {
      alpha = opt.max_step / gmax;
    }
    alpha = std::min(alpha, opt.max_step / gmax);

    const double g2 = g.squaredNorm();
    bool accepted = false;
    Eigen::VectorXd x_new, g_new(g.size());
    double f_new = 0.0;
    for (int b = 0; b <= opt.max_backtracks; ++b, alpha *= opt.shrink) {
      x_new = r.x - alpha * g;
      if (admissible && !admissible(x_new)) continue;
      f_new = f(x_new, &g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && f_new <= r.value - opt.armijo * alpha * g2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const double decrease = r.value - f_new;
    x_prev = std::move(r.x);
    g_prev = std::move(g);
    r.x = std::move(x_new);
    g = std::move(g_new);
    r.value = f_new;
    r.iterations = it + 1;
    if (decrease < opt.rel_tol * std::abs(r.value) + opt.abs_tol) break;
  }
  return r;
}

}  // namespace svstitch
