#pragma once

#include <functional>

#include <Eigen/Core>

namespace svstitch {

struct DescentOptions {
  int max_iters = 100;
  // Stop once an accepted step lowers the objective by less than
  // rel_tol * |f| + abs_tol.
  double rel_tol = 1e-6;
  double abs_tol = 1e-12;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 30;
  // Largest coordinate change allowed in one step, in parameter units.
  double max_step = 1.0;
};

struct DescentResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double start_value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

// Objective returning f(x) and writing the gradient into *grad when non-null.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

// Points for which this returns false are never accepted by the line search.
using Admissible = std::function<bool(const Eigen::VectorXd&)>;

// Gradient descent with Barzilai-Borwein step proposals and Armijo
// backtracking. The objective never increases between accepted iterates;
// exhausting the backtracking budget ends the run at the current iterate.
// The starting value must be finite.
DescentResult minimize(const Objective& f, Eigen::VectorXd x0, const DescentOptions& opt,
                       const Admissible& admissible = {});

}  // namespace svstitch
