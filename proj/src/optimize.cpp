#include "quirky/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace quirky {

namespace {

struct LinePoint {
  double t;
  double f;
  double dphi;  // directional derivative at t
};

// Minimizer of the cubic interpolating (t, f, dphi) at two points, clamped
// into the open bracket; falls back to bisection.
double cubic_min(const LinePoint& lo, const LinePoint& hi) {
  const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (lo.t - hi.t);
  const double disc = d1 * d1 - lo.dphi * hi.dphi;
  const double a = std::min(lo.t, hi.t);
  const double b = std::max(lo.t, hi.t);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), hi.t - lo.t);
    const double t = hi.t - (hi.t - lo.t) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    const double margin = 0.1 * (b - a);
    if (std::isfinite(t) && t > a + margin && t < b - margin) return t;
  }
  return 0.5 * (a + b);
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, const LbfgsOptions& options) {
  LbfgsResult result;
  Vector x = std::move(x0);
  Vector g(x.size());
  double fx = f(x, g);

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;

  Vector x_new(x.size());
  Vector g_new(x.size());

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (!std::isfinite(fx) || !g.allFinite()) break;
    if (g.cwiseAbs().maxCoeff() < options.gradient_tol) {
      result.converged = true;
      break;
    }

    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      gamma = 1.0 / std::max(1.0, g.norm());
    }
    Vector dir = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += s_hist[i] * (alpha[i] - beta);
    }
    dir = -dir;
    double dphi0 = g.dot(dir);
    if (!(dphi0 < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g / std::max(1.0, g.norm());
      dphi0 = g.dot(dir);
    }

    auto eval = [&](double t) {
      x_new = x + t * dir;
      const double fv = f(x_new, g_new);
      return LinePoint{t, fv, g_new.dot(dir)};
    };

    const LinePoint p0{0.0, fx, dphi0};
    LinePoint prev = p0;
    double t = 1.0;
    bool found = false;
    LinePoint accepted{};
    Vector x_acc;
    Vector g_acc;

    auto zoom = [&](LinePoint lo, LinePoint hi) {
      for (int k = 0; k < options.max_line_search; ++k) {
        const double tj = cubic_min(lo, hi);
        const LinePoint pj = eval(tj);
        if (!std::isfinite(pj.f) || pj.f > fx + options.c1 * tj * dphi0 || pj.f >= lo.f) {
          hi = pj;
        } else {
          if (std::abs(pj.dphi) <= -options.c2 * dphi0) {
            accepted = pj;
            x_acc = x_new;
            g_acc = g_new;
            return true;
          }
          if (pj.dphi * (hi.t - lo.t) >= 0) hi = lo;
          lo = pj;
        }
        if (std::abs(hi.t - lo.t) < 1e-16 * std::max(1.0, std::abs(lo.t))) break;
      }
      // Accept the best sufficient-decrease point seen, if any.
      if (lo.t > 0.0 && lo.f < fx) {
        const LinePoint pl = eval(lo.t);
        accepted = pl;
        x_acc = x_new;
        g_acc = g_new;
        return true;
      }
      return false;
    };

    for (int k = 0; k < options.max_line_search; ++k) {
      const LinePoint pt = eval(t);
      if (!std::isfinite(pt.f) || pt.f > fx + options.c1 * t * dphi0 || (k > 0 && pt.f >= prev.f)) {
        found = zoom(prev, pt);
        break;
      }
      if (std::abs(pt.dphi) <= -options.c2 * dphi0) {
        accepted = pt;
        x_acc = x_new;
        g_acc = g_new;
        found = true;
        break;
      }
      if (pt.dphi >= 0) {
        found = zoom(pt, prev);
        break;
      }
      prev = pt;
      t *= 2.0;
    }
    if (!found) break;

    Vector s = x_acc - x;
    Vector y = g_acc - g;
    const double sy = s.dot(y);
    x = std::move(x_acc);
    g = std::move(g_acc);
    fx = accepted.f;
    result.iterations = iter + 1;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  if (g.allFinite() && g.cwiseAbs().maxCoeff() < options.gradient_tol) result.converged = true;
  result.x = std::move(x);
  result.value = fx;
  return result;
}

}  // namespace quirky
