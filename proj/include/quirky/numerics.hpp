#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace quirky {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Binary labels stored as 0/1 ints.
using Labels = Eigen::VectorXi;

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Area under the ROC curve as the normalized Mann-Whitney U statistic.
/// Tied (positive, negative) pairs contribute one half. Throws DataError
/// ("degenerate classes") unless both classes are present.
double auroc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Labels>& labels);

// Throws unless labels are all 0/1 and match the score count.
void check_binary_labels(const Eigen::Ref<const Labels>& labels, Eigen::Index expected);

// Counts of (negatives, positives).
std::pair<Eigen::Index, Eigen::Index> class_counts(const Eigen::Ref<const Labels>& labels);

/// Empirical quantile with linear interpolation between order statistics
/// (position (n-1)q). `values` need not be sorted.
double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Platt scaling
// ---------------------------------------------------------------------------

struct PlattParams {
  double slope = 1.0;
  double intercept = 0.0;

  double apply(double score) const { return slope * score + intercept; }
};

struct PlattOptions {
  double slope_bound = 1e4;
  double gradient_tol = 1e-8;
  int max_iterations = 500;
};

/// Fits sigmoid(a*s + b) to the labels by minimizing mean cross-entropy.
/// The slope is clipped to +-slope_bound so separable data stays finite.
PlattParams fit_platt(const Eigen::Ref<const Vector>& scores,
                      const Eigen::Ref<const Labels>& labels,
                      const PlattOptions& options = {});

double sigmoid(double z);
// log(1 + exp(z)) without overflow.
double softplus(double z);

// ---------------------------------------------------------------------------
// Gaussian fitting and covariance helpers
// ---------------------------------------------------------------------------

struct GaussianFit {
  Vector mean;
  Matrix covariance;
  Eigen::Index count = 0;
};

/// Sample mean and unbiased covariance of the rows of X (needs >= 2 rows).
GaussianFit fit_gaussian(const Eigen::Ref<const Matrix>& rows);

// Population (1/n) covariance of the rows about their mean.
Matrix row_covariance(const Eigen::Ref<const Matrix>& rows, const Eigen::Ref<const Vector>& mean);

// The repo-wide ridge scale: 1e-6 * trace / d.
double default_ridge(const Eigen::Ref<const Matrix>& covariance);

// ---------------------------------------------------------------------------
// Spectral helpers
// ---------------------------------------------------------------------------

/// Unit eigenvector of the centered sample covariance with the largest
/// eigenvalue, oriented so the first nonzero coordinate is positive.
/// Throws NumericError("degenerate spectrum") on zero-variance input.
Vector top_principal_component(const Eigen::Ref<const Matrix>& X);

// ---------------------------------------------------------------------------
// Binary concept erasure
// ---------------------------------------------------------------------------

// Affine map x' = x - lift * <project, x - mean>. An empty lift means the
// identity. Class-conditional means of the fitted data coincide afterwards.
struct ConceptEraser {
  Vector mean;
  Vector lift;
  Vector project;

  bool is_identity() const { return lift.size() == 0; }
  Matrix apply(const Eigen::Ref<const Matrix>& X) const;
  Vector apply_row(const Eigen::Ref<const Vector>& x) const;
};

ConceptEraser fit_concept_eraser(const Eigen::Ref<const Matrix>& X,
                                 const Eigen::Ref<const Labels>& concept_labels);

/// Removes the linearly available information about `concept_labels` from X using
/// the whitened mean-difference direction.
Matrix erase_binary_concept(const Eigen::Ref<const Matrix>& X,
                            const Eigen::Ref<const Labels>& concept_labels);

// ---------------------------------------------------------------------------
// Mahalanobis distance
// ---------------------------------------------------------------------------

enum class MahalanobisVariant { full, diag_subtracted };

const char* to_string(MahalanobisVariant v);
MahalanobisVariant mahalanobis_variant_from_string(const std::string& s);

// Precomputed factorization of the (modified, regularized) covariance so that
// many points can be scored against one fit.
class MahalanobisMetric {
 public:
  MahalanobisMetric(const GaussianFit& fit, MahalanobisVariant variant);

  double operator()(const Eigen::Ref<const Vector>& x) const;
  // Distance of every row.
  Vector rows(const Eigen::Ref<const Matrix>& points) const;

  const Matrix& regularized_covariance() const { return cov_; }

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
};

double mahalanobis(const Eigen::Ref<const Vector>& x, const GaussianFit& fit,
                   MahalanobisVariant variant = MahalanobisVariant::full);

// ---------------------------------------------------------------------------
// Householder reflection
// ---------------------------------------------------------------------------

/// h' = h - 2 <h - center, w> w. `w` must be unit norm within 1e-8.
Vector householder_reflect(const Eigen::Ref<const Vector>& h, const Eigen::Ref<const Vector>& w,
                           const Eigen::Ref<const Vector>& center);

}  // namespace quirky
