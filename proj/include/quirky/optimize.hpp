#pragma once

#include <functional>

#include "quirky/numerics.hpp"

namespace quirky {

// Objective returning f(x) and writing the gradient into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-7;  // on the gradient infinity norm
  int history = 10;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature (strong Wolfe)
  int max_line_search = 25;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom
/// with cubic interpolation).
LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, const LbfgsOptions& options = {});

}  // namespace quirky
