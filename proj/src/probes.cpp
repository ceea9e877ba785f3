#include "quirky/probes.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "quirky/error.hpp"
#include "quirky/rng.hpp"

namespace quirky {

const char* to_string(Method m) {
  switch (m) {
    case Method::logr: return "logr";
    case Method::diff_means: return "diff_means";
    case Method::lda: return "lda";
    case Method::ccs: return "ccs";
    case Method::crc: return "crc";
    case Method::logr_contrast: return "logr_contrast";
    case Method::diff_means_contrast: return "diff_means_contrast";
    case Method::random: return "random";
  }
  return "logr";
}

Method method_from_string(const std::string& s) {
  for (Method m : all_methods()) {
    if (s == to_string(m)) return m;
  }
  if (s == "random") return Method::random;
  throw DataError("unknown probing method '" + s + "'");
}

std::vector<Method> all_methods() {
  return {Method::logr, Method::diff_means, Method::lda, Method::ccs, Method::crc, Method::logr_contrast,
          Method::diff_means_contrast};
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      for (Method m : all_methods()) out.push_back(m);
      continue;
    }
    out.push_back(method_from_string(item));
  }
  if (out.empty()) throw DataError("no probing methods given");
  return out;
}

bool uses_contrast(Method m) {
  return m == Method::ccs || m == Method::crc || m == Method::logr_contrast || m == Method::diff_means_contrast;
}

bool is_unsupervised(Method m) { return m == Method::ccs || m == Method::crc || m == Method::random; }

Eigen::Index ProbeData::rows() const { return single.size() > 0 ? single.rows() : pos.rows(); }

ProbeData probe_data(const StoreView& view, int layer, Method method) {
  ProbeData data;
  if (uses_contrast(method)) {
    const ActivationStore& s = view.store();
    if (!s.has_position(Position::answer_pos) || !s.has_position(Position::answer_neg)) {
      throw DataError(std::string("method ") + to_string(method) + " needs answer_pos and answer_neg activations");
    }
    data.pos = view.matrix(layer, Position::answer_pos);
    data.neg = view.matrix(layer, Position::answer_neg);
  } else {
    data.single = view.matrix(layer, Position::final_prompt);
  }
  return data;
}

ProbeData contrast_data(Matrix pos, Matrix neg) {
  if (pos.rows() != neg.rows() || pos.cols() != neg.cols()) throw DataError("contrast branches differ in shape");
  ProbeData d;
  d.pos = std::move(pos);
  d.neg = std::move(neg);
  return d;
}

ProbeData single_data(Matrix x) {
  ProbeData d;
  d.single = std::move(x);
  return d;
}

namespace {

void require_finite(const Eigen::Ref<const Matrix>& X, const char* what) {
  if (!X.allFinite()) throw DataError(std::string(what) + " contains non-finite activations");
}

void require_both_classes(const Eigen::Ref<const Labels>& labels, Eigen::Index n) {
  check_binary_labels(labels, n);
  const auto [n0, n1] = class_counts(labels);
  if (n0 == 0 || n1 == 0) throw DataError("degenerate classes");
}

Matrix concat(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg) {
  Matrix out(pos.rows(), pos.cols() + neg.cols());
  out << pos, neg;
  return out;
}

std::pair<Vector, Vector> class_means(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels) {
  Vector mu0 = Vector::Zero(X.cols());
  Vector mu1 = Vector::Zero(X.cols());
  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (labels[i] == 1) {
      mu1 += X.row(i).transpose();
      ++n1;
    } else {
      mu0 += X.row(i).transpose();
    }
  }
  mu1 /= static_cast<double>(n1);
  mu0 /= static_cast<double>(X.rows() - n1);
  return {mu0, mu1};
}

}  // namespace

Vector Probe::raw_scores(const ProbeData& data) const {
  const Eigen::Index width = input_width();
  switch (method) {
    case Method::logr:
    case Method::diff_means:
    case Method::lda:
    case Method::random:
      if (data.single.cols() != width) throw DataError("probe input width mismatch");
      return (data.single * w).array() + b;
    case Method::logr_contrast:
    case Method::diff_means_contrast:
      if (data.pos.cols() * 2 != width || data.neg.cols() * 2 != width) {
        throw DataError("probe input width mismatch");
      }
      return (data.pos * w.head(width / 2) + data.neg * w.tail(width / 2)).array() + b;
    case Method::ccs:
    case Method::crc: {
      if (data.pos.cols() != width || data.neg.cols() != width) throw DataError("probe input width mismatch");
      Matrix diff = data.pos - data.neg;
      if (erasure && !erasure->is_identity()) {
        // The eraser mean cancels in the difference.
        diff -= (diff * erasure->project) * erasure->lift.transpose();
      }
      Vector s = diff * w;
      if (method == Method::crc) s.array() += b;
      return s;
    }
  }
  return {};
}

Eigen::Index Probe::input_width() const { return w.size(); }

nlohmann::json to_json(const Probe& p) {
  nlohmann::json j;
  j["method"] = to_string(p.method);
  j["layer"] = p.layer;
  j["w"] = std::vector<double>(p.w.data(), p.w.data() + p.w.size());
  j["b"] = p.b;
  if (p.platt) j["platt"] = {{"a", p.platt->slope}, {"b", p.platt->intercept}};
  if (p.erasure) {
    const auto& e = *p.erasure;
    nlohmann::json basis = nlohmann::json::array();
    if (!e.is_identity()) {
      basis.push_back(std::vector<double>(e.lift.data(), e.lift.data() + e.lift.size()));
      basis.push_back(std::vector<double>(e.project.data(), e.project.data() + e.project.size()));
    }
    j["erasure"] = {{"mu", std::vector<double>(e.mean.data(), e.mean.data() + e.mean.size())}, {"basis", basis}};
  }
  j["sign_resolved_on"] = p.sign_resolved_on;
  if (p.train_loss) j["train_loss"] = *p.train_loss;
  return j;
}

namespace {

Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Probe probe_from_json(const nlohmann::json& j) {
  Probe p;
  try {
    p.method = method_from_string(j.at("method").get<std::string>());
    p.layer = j.at("layer").get<int>();
    p.w = vector_from_json(j.at("w"));
    p.b = j.at("b").get<double>();
    if (j.contains("platt")) p.platt = PlattParams{j["platt"].at("a").get<double>(), j["platt"].at("b").get<double>()};
    if (j.contains("erasure")) {
      ConceptEraser e;
      const auto& basis = j["erasure"].at("basis");
      if (!basis.empty()) {
        if (basis.size() != 2) throw DataError("erasure basis must hold lift and project vectors");
        e.mean = vector_from_json(j["erasure"].at("mu"));
        e.lift = vector_from_json(basis[0]);
        e.project = vector_from_json(basis[1]);
      }
      p.erasure = e;
    }
    p.sign_resolved_on = j.value("sign_resolved_on", std::string{});
    if (j.contains("train_loss")) p.train_loss = j["train_loss"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed probe JSON: ") + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Supervised methods
// ---------------------------------------------------------------------------

Probe train_logr(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels, double l2) {
  if (X.rows() <= 2) throw DataError("logistic regression needs more than 2 rows");
  require_both_classes(labels, X.rows());
  require_finite(X, "logistic regression input");
  if (!(l2 > 0.0)) throw DataError("l2 penalty must be positive");

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector y = labels.cast<double>();
  Vector w = Vector::Zero(d);
  double b = 0.0;

  auto objective = [&](const Vector& ww, double bb) {
    const Vector z = (X * ww).array() + bb;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += softplus(z[i]) - y[i] * z[i];
    return loss * inv_n + 0.5 * l2 * ww.squaredNorm();
  };

  double loss = objective(w, b);
  for (int iter = 0; iter < 200; ++iter) {
    const Vector z = (X * w).array() + b;
    Vector p(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(z[i]);
      s[i] = p[i] * (1.0 - p[i]);
    }
    const Vector r = p - y;
    Vector grad(d + 1);
    grad.head(d) = X.transpose() * r * inv_n + l2 * w;
    grad[d] = r.sum() * inv_n;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-6) break;

    Matrix H(d + 1, d + 1);
    const Matrix Xs = X.array().colwise() * s.array();
    H.topLeftCorner(d, d) = X.transpose() * Xs * inv_n;
    H.topLeftCorner(d, d).diagonal().array() += l2;
    const Vector hb = Xs.colwise().sum().transpose() * inv_n;
    H.block(0, d, d, 1) = hb;
    H.block(d, 0, 1, d) = hb.transpose();
    H(d, d) = s.sum() * inv_n + 1e-12;
    const Eigen::LDLT<Matrix> ldlt(H);
    Vector step = -ldlt.solve(grad);
    if (!step.allFinite() || step.dot(grad) >= 0.0) step = -grad;

    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector w_new = w + t * step.head(d);
      const double b_new = b + t * step[d];
      const double l_new = objective(w_new, b_new);
      if (l_new <= loss + 1e-4 * t * step.dot(grad)) {
        w = w_new;
        b = b_new;
        loss = l_new;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }

  Probe probe;
  probe.method = Method::logr;
  probe.w = w;
  probe.b = b;
  probe.train_loss = loss;
  return probe;
}

Probe train_diff_means(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels) {
  require_both_classes(labels, X.rows());
  require_finite(X, "diff-in-means input");
  const auto [mu0, mu1] = class_means(X, labels);
  Probe probe;
  probe.method = Method::diff_means;
  probe.w = mu1 - mu0;
  const double scale = std::max({mu0.norm(), mu1.norm(), X.cwiseAbs().maxCoeff(), 1e-300});
  if (probe.w.norm() < 1e-12 * scale) throw NumericError("degenerate direction");
  probe.b = -probe.w.dot(mu1 + mu0) / 2.0;
  return probe;
}

Probe train_lda(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Labels>& labels) {
  require_both_classes(labels, X.rows());
  require_finite(X, "LDA input");
  const auto [mu0, mu1] = class_means(X, labels);
  const Eigen::Index d = X.cols();
  Matrix centered = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    centered.row(i) -= (labels[i] == 1 ? mu1 : mu0).transpose();
  }
  const double denom = static_cast<double>(std::max<Eigen::Index>(X.rows() - 2, 1));
  Matrix S = centered.transpose() * centered / denom;
  const double lambda = 1e-3 * S.trace() / static_cast<double>(d);
  S.diagonal().array() += lambda;
  const Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("LDA covariance solve failed after ridge");
  Probe probe;
  probe.method = Method::lda;
  probe.w = llt.solve(mu1 - mu0);
  if (!probe.w.allFinite() || probe.w.norm() == 0.0) throw NumericError("LDA covariance solve failed after ridge");
  probe.b = -probe.w.dot(mu1 + mu0) / 2.0;
  return probe;
}

// ---------------------------------------------------------------------------
// Contrast-pair methods
// ---------------------------------------------------------------------------

double ccs_pair_loss(double p_pos, double p_neg) {
  const double consistency = p_pos - (1.0 - p_neg);
  const double confidence = std::min(p_pos, p_neg);
  return consistency * consistency + confidence * confidence;
}

namespace {

double ccs_objective(const Vector& theta, Vector& grad, const Matrix& pos, const Matrix& neg) {
  const Eigen::Index d = pos.cols();
  const Eigen::Index n = pos.rows();
  const auto w = theta.head(d);
  const double b = theta[d];
  const Vector zp = (pos * w).array() + b;
  const Vector zn = (neg * w).array() + b;
  Vector gp(n), gn(n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pp = sigmoid(zp[i]);
    const double pn = sigmoid(zn[i]);
    const double cons = pp + pn - 1.0;
    double dpp = 2.0 * cons;
    double dpn = 2.0 * cons;
    if (pp <= pn) {
      dpp += 2.0 * pp;
    } else {
      dpn += 2.0 * pn;
    }
    loss += ccs_pair_loss(pp, pn);
    gp[i] = dpp * pp * (1.0 - pp);
    gn[i] = dpn * pn * (1.0 - pn);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  grad.resize(d + 1);
  grad.head(d) = (pos.transpose() * gp + neg.transpose() * gn) * inv_n;
  grad[d] = (gp.sum() + gn.sum()) * inv_n;
  return loss * inv_n;
}

ConceptEraser branch_eraser(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg) {
  Matrix stacked(pos.rows() + neg.rows(), pos.cols());
  stacked << pos, neg;
  Labels branch(stacked.rows());
  branch.head(pos.rows()).setOnes();
  branch.tail(neg.rows()).setZero();
  return fit_concept_eraser(stacked, branch);
}

}  // namespace

double ccs_loss(const Eigen::Ref<const Vector>& w, double b, const Eigen::Ref<const Matrix>& pos,
                const Eigen::Ref<const Matrix>& neg) {
  Vector theta(w.size() + 1);
  theta << w, b;
  Vector grad;
  return ccs_objective(theta, grad, pos, neg);
}

Probe train_ccs(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg, int restarts,
                std::uint64_t seed, const LbfgsOptions& lbfgs) {
  if (pos.rows() != neg.rows() || pos.cols() != neg.cols()) throw DataError("contrast branches differ in shape");
  if (pos.rows() < 16) throw DataError("CCS needs at least 16 contrast pairs");
  if (restarts < 1) throw DataError("CCS needs at least one restart");
  require_finite(pos, "CCS input");
  require_finite(neg, "CCS input");

  const ConceptEraser eraser = branch_eraser(pos, neg);
  Matrix ep = eraser.apply(pos);
  Matrix en = eraser.apply(neg);
  // Train on centered branches; the bias absorbs the shift.
  const Vector center = (ep.colwise().mean() + en.colwise().mean()).transpose() / 2.0;
  ep.rowwise() -= center.transpose();
  en.rowwise() -= center.transpose();

  const Eigen::Index d = pos.cols();
  const Objective f = [&](const Vector& theta, Vector& grad) { return ccs_objective(theta, grad, ep, en); };
  std::vector<double> losses;
  std::optional<LbfgsResult> best;
  for (int r = 0; r < restarts; ++r) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal;
    Vector theta = Vector::Zero(d + 1);
    for (Eigen::Index k = 0; k < d; ++k) theta[k] = normal(rng);
    theta.head(d).normalize();
    LbfgsResult res = minimize_lbfgs(f, theta, lbfgs);
    losses.push_back(res.value);
    if (!std::isfinite(res.value) || !res.x.allFinite()) continue;
    if (!best || res.value < best->value) best = std::move(res);
  }
  if (!best) {
    std::ostringstream msg;
    msg << "all CCS restarts diverged (losses:";
    for (double l : losses) msg << ' ' << l;
    msg << ")";
    throw NumericError(msg.str());
  }

  Probe probe;
  probe.method = Method::ccs;
  probe.w = best->x.head(d);
  probe.b = best->x[d] - probe.w.dot(center);
  probe.erasure = eraser;
  probe.train_loss = best->value;
  return probe;
}

Probe train_crc(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg) {
  if (pos.rows() != neg.rows() || pos.cols() != neg.cols()) throw DataError("contrast branches differ in shape");
  if (pos.rows() < 2) throw DataError("CRC needs at least 2 contrast pairs");
  require_finite(pos, "CRC input");
  require_finite(neg, "CRC input");
  const ConceptEraser eraser = branch_eraser(pos, neg);
  const Matrix diff = eraser.apply(pos) - eraser.apply(neg);
  Probe probe;
  probe.method = Method::crc;
  probe.w = top_principal_component(diff);
  const Vector s = diff * probe.w;
  probe.b = -quantile(std::vector<double>(s.data(), s.data() + s.size()), 0.5);
  probe.erasure = eraser;
  return probe;
}

Probe train_contrast_supervised(const Eigen::Ref<const Matrix>& pos, const Eigen::Ref<const Matrix>& neg,
                                const Eigen::Ref<const Labels>& labels, Method method, double l2) {
  if (pos.rows() != neg.rows() || pos.cols() != neg.cols()) throw DataError("contrast branches differ in shape");
  const Matrix X = concat(pos, neg);
  Probe probe;
  if (method == Method::logr_contrast) {
    probe = train_logr(X, labels, l2);
  } else if (method == Method::diff_means_contrast) {
    probe = train_diff_means(X, labels);
  } else {
    throw DataError(std::string("not a supervised contrast method: ") + to_string(method));
  }
  probe.method = method;
  return probe;
}

Probe train_random(Eigen::Index width, std::uint64_t seed) {
  if (width < 1) throw DataError("random probe needs a positive width");
  Rng rng = make_rng(seed, 0x7a2d);
  std::normal_distribution<double> normal;
  Probe probe;
  probe.method = Method::random;
  probe.w.resize(width);
  do {
    for (Eigen::Index k = 0; k < width; ++k) probe.w[k] = normal(rng);
  } while (probe.w.norm() == 0.0);
  probe.w.normalize();
  return probe;
}

Probe train_probe(Method method, const ProbeData& data, const Eigen::Ref<const Labels>& labels,
                  const ProbeOptions& options) {
  switch (method) {
    case Method::logr: {
      Probe p = train_logr(data.single, labels, options.l2);
      return p;
    }
    case Method::diff_means: return train_diff_means(data.single, labels);
    case Method::lda: return train_lda(data.single, labels);
    case Method::ccs: return train_ccs(data.pos, data.neg, options.ccs_restarts, options.seed, options.lbfgs);
    case Method::crc: return train_crc(data.pos, data.neg);
    case Method::logr_contrast:
    case Method::diff_means_contrast:
      return train_contrast_supervised(data.pos, data.neg, labels, method, options.l2);
    case Method::random: return train_random(data.single.cols(), options.seed);
  }
  throw DataError("unknown method");
}

// ---------------------------------------------------------------------------
// Sign resolution, prediction, random baseline
// ---------------------------------------------------------------------------

const char* to_string(SignMode m) { return m == SignMode::platt ? "platt" : "auroc"; }

SignMode sign_mode_from_string(const std::string& s) {
  if (s == "platt") return SignMode::platt;
  if (s == "auroc") return SignMode::auroc;
  throw DataError("unknown sign mode '" + s + "'");
}

Probe resolve_sign(Probe probe, const ProbeData& data, const Eigen::Ref<const Labels>& labels, SignMode mode,
                   const std::string& resolution_set) {
  require_both_classes(labels, data.rows());
  const Vector scores = probe.raw_scores(data);
  bool flip = false;
  if (mode == SignMode::platt) {
    PlattParams platt = fit_platt(scores, labels);
    if (platt.slope < 0.0) {
      flip = true;
      platt.slope = -platt.slope;
    }
    probe.platt = platt;
  } else {
    flip = auroc(scores, labels) < 0.5;
    probe.platt.reset();
  }
  if (flip) {
    probe.w = -probe.w;
    probe.b = -probe.b;
  }
  probe.sign_resolved_on = resolution_set.empty() ? std::string(to_string(mode)) : resolution_set;
  return probe;
}

Vector predict_logodds(const Probe& probe, const ProbeData& data) {
  Vector s = probe.raw_scores(data);
  if (probe.platt) s = (s.array() * probe.platt->slope + probe.platt->intercept).matrix();
  return s;
}

RandomBaseline random_probe_quantiles(const Eigen::Ref<const Matrix>& X_src, const Eigen::Ref<const Labels>& y_src,
                                      const Eigen::Ref<const Matrix>& X_tgt, const Eigen::Ref<const Labels>& y_tgt,
                                      std::size_t draws, std::uint64_t seed) {
  require_both_classes(y_src, X_src.rows());
  require_both_classes(y_tgt, X_tgt.rows());
  if (X_src.cols() != X_tgt.cols()) throw DataError("source and target widths differ");
  if (draws == 0) throw DataError("random baseline needs at least one draw");
  const Eigen::Index d = X_src.cols();
  Rng rng = make_rng(seed, 0xba5e);
  std::normal_distribution<double> normal;

  std::vector<double> target_aurocs;
  target_aurocs.reserve(draws);
  constexpr std::size_t kBatch = 256;
  Matrix W(d, static_cast<Eigen::Index>(kBatch));
  for (std::size_t done = 0; done < draws; done += kBatch) {
    const auto m = static_cast<Eigen::Index>(std::min(kBatch, draws - done));
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) W(k, j) = normal(rng);
      W.col(j).normalize();
    }
    const Matrix S_src = X_src * W.leftCols(m);
    const Matrix S_tgt = X_tgt * W.leftCols(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool flip = auroc(S_src.col(j), y_src) < 0.5;
      const double t = auroc(S_tgt.col(j), y_tgt);
      target_aurocs.push_back(flip ? 1.0 - t : t);
    }
  }
  RandomBaseline out;
  out.draws = draws;
  for (double p : out.percentiles) out.values.push_back(quantile(target_aurocs, p / 100.0));
  return out;
}

}  // namespace quirky
