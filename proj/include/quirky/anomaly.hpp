#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "quirky/activation_store.hpp"
#include "quirky/numerics.hpp"
#include "quirky/probes.hpp"

namespace quirky {

// Gaussian over per-layer probe log-odds, fit on Alice's easy examples.
struct AnomalyDetector {
  Method method = Method::logr;
  MahalanobisVariant variant = MahalanobisVariant::full;
  std::vector<Probe> probes;  // one per layer, in layer order
  GaussianFit fit;
  std::string reference_filter;
  // Example ids that entered probe training and the Gaussian fit.
  std::vector<std::string> train_ids;
  std::vector<std::string> reference_ids;

  int feature_dim() const { return static_cast<int>(probes.size()); }
};

nlohmann::json to_json(const AnomalyDetector& d);
AnomalyDetector anomaly_detector_from_json(const nlohmann::json& j);

struct AnomalyOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  ProbeOptions probe{};
};

/// Probes are trained on AE (train split) and Platt-calibrated on AE
/// (validation split); the Gaussian is fit to the validation features.
AnomalyDetector fit_detector(const ActivationStore& store, Method method,
                             MahalanobisVariant variant = MahalanobisVariant::full, const AnomalyOptions& options = {});

// Per-layer log-odds, one row per example of the view.
Matrix anomaly_features(const AnomalyDetector& detector, const StoreView& view);

struct AnomalyScores {
  std::vector<std::string> ids;
  Vector scores;
};

AnomalyScores score(const AnomalyDetector& detector, const ActivationStore& store, const Filter& filter);

struct AnomalyEval {
  double auroc = 0.5;
  std::size_t n_bob_hard = 0;
  std::size_t n_alice_hard = 0;
};

/// AUROC of Bob-hard (positive) against Alice-hard on the given split.
AnomalyEval eval_anomaly(const AnomalyDetector& detector, const ActivationStore& store, Split split = Split::test);

}  // namespace quirky
