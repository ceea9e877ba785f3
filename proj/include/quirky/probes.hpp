#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quirky/activation_store.hpp"
#include "quirky/numerics.hpp"
#include "quirky/optimize.hpp"

namespace quirky {

enum class Method { logr, diff_means, lda, ccs, crc, logr_contrast, diff_means_contrast, random };

const char* to_string(Method m);
Method method_from_string(const std::string& s);
std::vector<Method> all_methods();
// Parses a comma-separated list such as "logr,ccs".
std::vector<Method> parse_methods(const std::string& list);

// Methods that read the two answer positions instead of the prompt position.
bool uses_contrast(Method m);
bool is_unsupervised(Method m);

// Activations for one layer. `single` feeds the prompt-position methods,
// `pos`/`neg` the contrast methods; only the fields a method needs are set.
struct ProbeData {
  Matrix single;
  Matrix pos;
  Matrix neg;

  Eigen::Index rows() const;
};

ProbeData probe_data(const StoreView& view, int layer, Method method);
ProbeData contrast_data(Matrix pos, Matrix neg);
ProbeData single_data(Matrix x);

struct Probe {
  Method method = Method::logr;
  int layer = 0;  // 0-indexed, as on disk
  Vector w;
  double b = 0.0;
  std::optional<PlattParams> platt;
  std::optional<ConceptEraser> erasure;
  std::string sign_resolved_on;
  std::optional<double> train_loss;

  // Uncalibrated score for every row.
  Vector raw_scores(const ProbeData& data) const;
  Eigen::Index input_width() const;
};

nlohmann::json to_json(const Probe& p);
Probe probe_from_json(const nlohmann::json& j);

struct ProbeOptions {
  double l2 = 1e-3;
  int ccs_restarts = 10;
  std::uint64_t seed = 0;
  LbfgsOptions lbfgs{};
};

/// L2-penalized logistic regression (bias unpenalized), Newton's method from
/// w = 0, b = 0 until the gradient infinity norm drops below 1e-6.
Probe train_logr(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels, double l2 = 1e-3);

/// w = mu1 - mu0, b = -w'(mu1 + mu0)/2.
Probe train_diff_means(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels);

/// w = (S_pooled + lambda I)^-1 (mu1 - mu0) with lambda = 1e-3 trace/d.
Probe train_lda(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels);

// Mean contrast-consistency plus confidence loss of a probe on (erased) pairs.
double ccs_loss(const Eigen::Ref<const Vector>& w, double b, const Eigen::Ref<const Matrix>& pos,
                const Eigen::Ref<const Matrix>& neg);
double ccs_pair_loss(double p_pos, double p_neg);

/// Unsupervised contrast-consistent search: branch identity is erased, then
/// the loss is minimized with L-BFGS from `restarts` random unit directions
/// and the lowest-loss run is kept. The sign is left unresolved.
Probe train_ccs(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg, int restarts = 10,
                std::uint64_t seed = 0, const LbfgsOptions& lbfgs = {});

/// Top principal component of the erased pair differences.
Probe train_crc(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg);

/// LogR or diff-in-means on the concatenation [x+ | x-].
Probe train_contrast_supervised(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg,
                                const Eigen::Ref<const Labels>& labels, Method method, double l2 = 1e-3);

// Uniform direction on the sphere.
Probe train_random(Eigen::Index width, std::uint64_t seed);

Probe train_probe(Method method, const ProbeData& data, const Eigen::Ref<const Labels>& labels,
                  const ProbeOptions& options = {});

enum class SignMode { platt, auroc };

const char* to_string(SignMode m);
SignMode sign_mode_from_string(const std::string& s);

/// Orients the probe on a labeled set. Platt mode fits calibration and folds
/// a negative slope into (w, b); AUROC mode negates iff AUROC < 0.5.
Probe resolve_sign(Probe probe, const ProbeData& data, const Eigen::Ref<const Labels>& labels,
                   SignMode mode = SignMode::platt, const std::string& resolution_set = "");

/// Calibrated log-odds when Platt parameters are present, else raw scores.
Vector predict_logodds(const Probe& probe, const ProbeData& data);

struct RandomBaseline {
  std::vector<double> percentiles{1, 5, 25, 50, 75, 95, 99};
  std::vector<double> values;
  std::size_t draws = 0;
};

/// Target AUROCs of random directions oriented on the source set.
RandomBaseline random_probe_quantiles(const Eigen::Ref<const Matrix>& X_src, const Eigen::Ref<const Labels>& y_src,
                                      const Eigen::Ref<const Matrix>& X_tgt, const Eigen::Ref<const Labels>& y_tgt,
                                      std::size_t draws = 100000, std::uint64_t seed = 0);

}  // namespace quirky
