#include "quirky/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include "quirky/error.hpp"

namespace quirky {

void check_binary_labels(const Eigen::Ref<const Labels>& labels, Eigen::Index expected) {
  if (labels.size() != expected) {
    std::ostringstream msg;
    msg << "label count " << labels.size() << " does not match score count " << expected;
    throw DataError(msg.str());
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError("labels must be 0 or 1");
    }
  }
}

std::pair<Eigen::Index, Eigen::Index> class_counts(const Eigen::Ref<const Labels>& labels) {
  const Eigen::Index pos = labels.sum();
  return {labels.size() - pos, pos};
}

double auroc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Labels>& labels) {
  check_binary_labels(labels, scores.size());
  const auto [n0, n1] = class_counts(labels);
  if (n0 == 0 || n1 == 0) throw DataError("degenerate classes: AUROC needs both labels present");

  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw DataError("AUROC scores contain NaN");
  }
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

  // Twice the U statistic, kept integral: a tie group with p positives and q
  // negatives above `neg_below` lower negatives adds p * (2 * neg_below + q).
  std::int64_t twice_u = 0;
  std::int64_t neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::int64_t p = 0;
    std::int64_t q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? p : q) += 1;
      ++j;
    }
    twice_u += p * (2 * neg_below + q);
    neg_below += q;
    i = j;
  }
  const double denom = 2.0 * static_cast<double>(n0) * static_cast<double>(n1);
  return static_cast<double>(twice_u) / denom;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DataError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

namespace {

struct PlattState {
  double loss;
  double grad_a;
  double grad_b;
  double h_aa;
  double h_ab;
  double h_bb;
};

PlattState platt_state(const Eigen::Ref<const Vector>& s, const Eigen::Ref<const Labels>& y, double a,
                       double b) {
  PlattState st{0, 0, 0, 0, 0, 0};
  const double n = static_cast<double>(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double z = a * s[i] + b;
    const double p = sigmoid(z);
    const double r = p - y[i];
    const double w = p * (1.0 - p);
    st.loss += softplus(z) - y[i] * z;
    st.grad_a += r * s[i];
    st.grad_b += r;
    st.h_aa += w * s[i] * s[i];
    st.h_ab += w * s[i];
    st.h_bb += w;
  }
  st.loss /= n;
  st.grad_a /= n;
  st.grad_b /= n;
  st.h_aa /= n;
  st.h_ab /= n;
  st.h_bb /= n;
  return st;
}

double platt_loss(const Eigen::Ref<const Vector>& s, const Eigen::Ref<const Labels>& y, double a,
                  double b) {
  double loss = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double z = a * s[i] + b;
    loss += softplus(z) - y[i] * z;
  }
  return loss / static_cast<double>(s.size());
}

}  // namespace

PlattParams fit_platt(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Labels>& labels,
                      const PlattOptions& options) {
  check_binary_labels(labels, scores.size());
  const auto [n0, n1] = class_counts(labels);
  if (n0 == 0 || n1 == 0) throw DataError("degenerate classes: Platt scaling needs both labels");
  if (!scores.allFinite()) throw DataError("Platt scaling scores must be finite");

  const double bound = options.slope_bound;
  double a = 0.0;
  double b = std::log(static_cast<double>(n1) / static_cast<double>(n0));

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const PlattState st = platt_state(scores, labels, a, b);
    // Projected gradient: a slope pinned at its bound may keep an outward
    // gradient component.
    const bool pinned = std::abs(a) >= bound && st.grad_a * a < 0;
    const double ga = pinned ? 0.0 : st.grad_a;
    if (std::max(std::abs(ga), std::abs(st.grad_b)) < options.gradient_tol) break;

    double da;
    double db;
    if (pinned) {
      da = 0.0;
      db = st.h_bb > 0 ? -st.grad_b / st.h_bb : -st.grad_b;
    } else {
      const double jitter = 1e-12 * (st.h_aa + st.h_bb) + 1e-300;
      const double haa = st.h_aa + jitter;
      const double hbb = st.h_bb + jitter;
      const double det = haa * hbb - st.h_ab * st.h_ab;
      if (det > 0) {
        da = -(hbb * st.grad_a - st.h_ab * st.grad_b) / det;
        db = -(-st.h_ab * st.grad_a + haa * st.grad_b) / det;
      } else {
        da = -st.grad_a;
        db = -st.grad_b;
      }
    }

    auto clip = [&](double v) { return std::clamp(v, -bound, bound); };
    auto trial_loss = [&](double t) { return platt_loss(scores, labels, clip(a + t * da), b + t * db); };

    double t = 1.0;
    double best = trial_loss(t);
    if (best < st.loss) {
      // Separable data drives the slope outward; Newton steps only grow it
      // linearly there, so keep doubling while the loss improves.
      for (int k = 0; k < 60; ++k) {
        const double next = trial_loss(2 * t);
        if (!(next < best)) break;
        best = next;
        t *= 2;
      }
    } else {
      while (t > 1e-20 && !(best < st.loss)) {
        t *= 0.5;
        best = trial_loss(t);
      }
      if (!(best < st.loss)) break;
    }
    a = clip(a + t * da);
    b = b + t * db;
  }
  return {a, b};
}

GaussianFit fit_gaussian(const Eigen::Ref<const Matrix>& rows) {
  if (rows.rows() < 2) throw DataError("Gaussian fit needs at least 2 rows");
  if (!rows.allFinite()) throw DataError("Gaussian fit input must be finite");
  GaussianFit fit;
  fit.count = rows.rows();
  fit.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - fit.mean.transpose();
  fit.covariance = (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  return fit;
}

Matrix row_covariance(const Eigen::Ref<const Matrix>& rows, const Eigen::Ref<const Vector>& mean) {
  const Matrix centered = rows.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(rows.rows());
  return 0.5 * (cov + cov.transpose());
}

double default_ridge(const Eigen::Ref<const Matrix>& covariance) {
  return 1e-6 * covariance.trace() / static_cast<double>(covariance.rows());
}

Vector top_principal_component(const Eigen::Ref<const Matrix>& X) {
  if (X.rows() < 2 || X.cols() < 1) throw DataError("principal component needs n >= 2 and d >= 1");
  if (!X.allFinite()) throw DataError("principal component input must be finite");
  const Vector mean = X.colwise().mean().transpose();
  const Matrix cov = row_covariance(X, mean);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("eigen solver failed");
  const double top = eig.eigenvalues()(X.cols() - 1);
  const double scale = X.cwiseAbs().maxCoeff();
  if (!(top > 1e-24 * scale * scale) || top <= 0.0) {
    throw NumericError("degenerate spectrum: input has zero variance");
  }
  Vector v = eig.eigenvectors().col(X.cols() - 1);
  v.normalize();
  const double tiny = 1e-12 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > tiny) {
      if (v[i] < 0) v = -v;
      break;
    }
  }
  return v;
}

Matrix ConceptEraser::apply(const Eigen::Ref<const Matrix>& X) const {
  if (is_identity()) return X;
  if (X.cols() != mean.size()) throw DataError("concept eraser width mismatch");
  const Vector coeff = (X.rowwise() - mean.transpose()) * project;
  return X - coeff * lift.transpose();
}

Vector ConceptEraser::apply_row(const Eigen::Ref<const Vector>& x) const {
  if (is_identity()) return x;
  if (x.size() != mean.size()) throw DataError("concept eraser width mismatch");
  return x - lift * project.dot(x - mean);
}

ConceptEraser fit_concept_eraser(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& concept_labels) {
  check_binary_labels(concept_labels, X.rows());
  if (!X.allFinite()) throw DataError("concept erasure input must be finite");
  ConceptEraser eraser;
  const auto [n0, n1] = class_counts(concept_labels);
  if (n0 == 0 || n1 == 0) return eraser;

  const Eigen::Index d = X.cols();
  Vector mu0 = Vector::Zero(d);
  Vector mu1 = Vector::Zero(d);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    (concept_labels[i] == 1 ? mu1 : mu0) += X.row(i).transpose();
  }
  mu0 /= static_cast<double>(n0);
  mu1 /= static_cast<double>(n1);
  const Vector gap = mu1 - mu0;
  if (gap.squaredNorm() == 0.0) return eraser;

  const Vector mean = X.colwise().mean().transpose();
  Matrix cov = row_covariance(X, mean);
  cov.diagonal().array() += default_ridge(cov);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("eigen solver failed in concept erasure");
  const Vector& evals = eig.eigenvalues();
  if (!(evals.minCoeff() > 0.0)) {
    std::ostringstream msg;
    msg << "singular covariance after ridge in concept erasure (smallest eigenvalue " << evals.minCoeff()
        << ")";
    throw NumericError(msg.str());
  }
  const Matrix& V = eig.eigenvectors();
  const Vector sqrt_e = evals.cwiseSqrt();
  // Whitened class-mean gap; below 1e-8 the concept is already erased.
  const Vector whitened = V * (V.transpose() * gap).cwiseQuotient(sqrt_e);
  const double norm = whitened.norm();
  if (norm <= 1e-8) return eraser;
  const Vector u = whitened / norm;

  eraser.mean = mean;
  eraser.lift = V * sqrt_e.cwiseProduct(V.transpose() * u);
  eraser.project = V * (V.transpose() * u).cwiseQuotient(sqrt_e);
  return eraser;
}

Matrix erase_binary_concept(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& concept_labels) {
  return fit_concept_eraser(X, concept_labels).apply(X);
}

const char* to_string(MahalanobisVariant v) {
  return v == MahalanobisVariant::full ? "full" : "diag_subtracted";
}

MahalanobisVariant mahalanobis_variant_from_string(const std::string& s) {
  if (s == "full") return MahalanobisVariant::full;
  if (s == "diag_subtracted" || s == "diag-subtracted") return MahalanobisVariant::diag_subtracted;
  throw DataError("unknown Mahalanobis variant '" + s + "'");
}

MahalanobisMetric::MahalanobisMetric(const GaussianFit& fit, MahalanobisVariant variant) : mean_(fit.mean) {
  const Eigen::Index d = fit.covariance.rows();
  if (d == 0 || fit.covariance.cols() != d || fit.mean.size() != d) {
    throw DataError("Gaussian fit has inconsistent dimensions");
  }
  const double trace = fit.covariance.trace();
  const double floor = 1e-6 * trace / static_cast<double>(d);

  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  if (variant == MahalanobisVariant::full) {
    // Eigenvalues below the ridge scale are lifted to it; a well-conditioned
    // covariance passes through untouched, keeping the distance affine
    // invariant.
    eig.compute(fit.covariance);
    Vector evals = eig.eigenvalues().cwiseMax(floor);
    cov_ = eig.eigenvectors() * evals.asDiagonal() * eig.eigenvectors().transpose();
  } else {
    cov_ = fit.covariance;
    cov_.diagonal().setZero();
    eig.compute(cov_);
    const double smallest = eig.eigenvalues().minCoeff();
    double ridge = floor;
    if (smallest + ridge <= 0.0) ridge = -smallest + 1e-2 * trace / static_cast<double>(d);
    cov_.diagonal().array() += ridge;
  }
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();

  eig.compute(cov_, Eigen::EigenvaluesOnly);
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > 0.0)) {
    std::ostringstream msg;
    msg << "covariance not positive definite after regularization (smallest eigenvalue " << smallest << ")";
    throw NumericError(msg.str());
  }
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "Cholesky failed on regularized covariance (smallest eigenvalue " << smallest << ")";
    throw NumericError(msg.str());
  }
}

double MahalanobisMetric::operator()(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != mean_.size()) throw DataError("Mahalanobis dimension mismatch");
  const Vector y = llt_.matrixL().solve(x - mean_);
  return y.norm();
}

Vector MahalanobisMetric::rows(const Eigen::Ref<const Matrix>& points) const {
  if (points.cols() != mean_.size()) throw DataError("Mahalanobis dimension mismatch");
  const Matrix centered = (points.rowwise() - mean_.transpose()).transpose();
  const Matrix y = llt_.matrixL().solve(centered);
  return y.colwise().norm().transpose();
}

double mahalanobis(const Eigen::Ref<const Vector>& x, const GaussianFit& fit, MahalanobisVariant variant) {
  return MahalanobisMetric(fit, variant)(x);
}

Vector householder_reflect(const Eigen::Ref<const Vector>& h, const Eigen::Ref<const Vector>& w,
                           const Eigen::Ref<const Vector>& center) {
  if (h.size() != w.size() || h.size() != center.size()) throw DataError("Householder dimension mismatch");
  if (std::abs(w.norm() - 1.0) > 1e-8) throw DataError("Householder normal must be unit norm");
  return h - 2.0 * (h - center).dot(w) * w;
}

}  // namespace quirky
