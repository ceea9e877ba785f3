#include "quirky/anomaly.hpp"

#include "quirky/error.hpp"
#include "quirky/parallel.hpp"
#include "quirky/rng.hpp"

namespace quirky {

namespace {

Filter alice_easy(Split split) {
  Filter f;
  f.characters = std::set<Character>{Character::alice};
  f.quartiles = std::set<Quartile>{Quartile::easy};
  f.splits = std::set<Split>{split};
  return f;
}

Filter hard_slice(Character c, Split split) {
  Filter f;
  f.characters = std::set<Character>{c};
  f.quartiles = std::set<Quartile>{Quartile::hard};
  f.splits = std::set<Split>{split};
  return f;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) r[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const AnomalyDetector& d) {
  nlohmann::json j;
  j["method"] = to_string(d.method);
  j["variant"] = to_string(d.variant);
  j["reference_filter"] = d.reference_filter;
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : d.probes) probes.push_back(to_json(p));
  j["probes"] = probes;
  j["mean"] = std::vector<double>(d.fit.mean.data(), d.fit.mean.data() + d.fit.mean.size());
  j["covariance"] = matrix_json(d.fit.covariance);
  j["count"] = d.fit.count;
  j["n_train"] = d.train_ids.size();
  j["n_reference"] = d.reference_ids.size();
  return j;
}

AnomalyDetector anomaly_detector_from_json(const nlohmann::json& j) {
  AnomalyDetector d;
  try {
    d.method = method_from_string(j.at("method").get<std::string>());
    d.variant = mahalanobis_variant_from_string(j.at("variant").get<std::string>());
    d.reference_filter = j.value("reference_filter", std::string{});
    for (const auto& p : j.at("probes")) d.probes.push_back(probe_from_json(p));
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto k = static_cast<Eigen::Index>(mean.size());
    d.fit.mean = Eigen::Map<const Vector>(mean.data(), k);
    d.fit.covariance.resize(k, k);
    const auto& cov = j.at("covariance");
    if (static_cast<Eigen::Index>(cov.size()) != k) throw DataError("covariance shape mismatch");
    for (Eigen::Index r = 0; r < k; ++r) {
      const auto row = cov[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != k) throw DataError("covariance shape mismatch");
      for (Eigen::Index c = 0; c < k; ++c) d.fit.covariance(r, c) = row[static_cast<std::size_t>(c)];
    }
    d.fit.count = j.value("count", Eigen::Index{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed detector JSON: ") + e.what());
  }
  if (d.feature_dim() != d.fit.mean.size()) throw DataError("detector feature dimension mismatch");
  return d;
}

AnomalyDetector fit_detector(const ActivationStore& store, Method method, MahalanobisVariant variant,
                             const AnomalyOptions& options) {
  store.validate();
  if (method == Method::random) throw DataError("random probes cannot feed an anomaly detector");
  const StoreView train = select(store, alice_easy(Split::train));
  const StoreView calib = select(store, alice_easy(Split::validation));
  const Labels y_train = train.labels(LabelSet::alice);
  const Labels y_calib = calib.labels(LabelSet::alice);
  for (const Labels* y : {&y_train, &y_calib}) {
    const auto [n0, n1] = class_counts(*y);
    if (n0 == 0 || n1 == 0) throw DataError("Alice-easy slice has a single class; cannot train probes");
  }

  AnomalyDetector det;
  det.method = method;
  det.variant = variant;
  det.reference_filter = alice_easy(Split::validation).describe();
  det.train_ids = train.ids();
  det.reference_ids = calib.ids();
  det.probes.resize(static_cast<std::size_t>(store.layer_count));

  parallel_for(det.probes.size(), options.jobs, [&](std::size_t l) {
    const int layer = static_cast<int>(l);
    ProbeOptions popts = options.probe;
    popts.seed = mix_seed(options.seed, 2000 + l);
    Probe p = train_probe(method, probe_data(train, layer, method), y_train, popts);
    p.layer = layer;
    det.probes[l] = resolve_sign(p, probe_data(calib, layer, method), y_calib, SignMode::platt,
                                 alice_easy(Split::validation).describe());
  });

  const Matrix features = anomaly_features(det, calib);
  if (features.rows() < 2) throw DataError("Alice-easy validation slice too small for a Gaussian fit");
  det.fit = fit_gaussian(features);
  return det;
}

Matrix anomaly_features(const AnomalyDetector& detector, const StoreView& view) {
  if (view.store().layer_count != detector.feature_dim()) {
    throw DataError("store layer count does not match the detector");
  }
  Matrix features(static_cast<Eigen::Index>(view.size()), detector.feature_dim());
  for (int l = 0; l < detector.feature_dim(); ++l) {
    const Probe& p = detector.probes[static_cast<std::size_t>(l)];
    features.col(l) = predict_logodds(p, probe_data(view, p.layer, p.method));
  }
  return features;
}

AnomalyScores score(const AnomalyDetector& detector, const ActivationStore& store, const Filter& filter) {
  const StoreView view = select(store, filter);
  const MahalanobisMetric metric(detector.fit, detector.variant);
  AnomalyScores out;
  out.ids = view.ids();
  out.scores = metric.rows(anomaly_features(detector, view));
  return out;
}

AnomalyEval eval_anomaly(const AnomalyDetector& detector, const ActivationStore& store, Split split) {
  const AnomalyScores bh = score(detector, store, hard_slice(Character::bob, split));
  const AnomalyScores ah = score(detector, store, hard_slice(Character::alice, split));
  Vector s(bh.scores.size() + ah.scores.size());
  s << bh.scores, ah.scores;
  Labels y(s.size());
  y.head(bh.scores.size()).setOnes();
  y.tail(ah.scores.size()).setZero();
  AnomalyEval out;
  out.auroc = auroc(s, y);
  out.n_bob_hard = static_cast<std::size_t>(bh.scores.size());
  out.n_alice_hard = static_cast<std::size_t>(ah.scores.size());
  return out;
}

}  // namespace quirky
