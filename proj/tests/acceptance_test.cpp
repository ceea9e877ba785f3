// One PASS/FAIL line per primary acceptance criterion; exits nonzero if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "quirky/anomaly.hpp"
#include "quirky/error.hpp"
#include "quirky/evaluation.hpp"
#include "quirky/quirky_data.hpp"
#include "quirky/world.hpp"

using namespace quirky;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

const ActivationStore& default_world() {
  static const ActivationStore store = gen_world(WorldConfig{}, 20000, 0).store;
  return store;
}

Filter alice_split(Split s, std::size_t max_n = 0) {
  Filter f;
  f.characters = std::set<Character>{Character::alice};
  f.splits = std::set<Split>{s};
  if (max_n > 0) f.max_n = max_n;
  return f;
}

void pgr_arithmetic(Outcome& o) {
  const double p = pgr(0.79, 0.53, 0.87);
  o.detail << "pgr(0.79,0.53,0.87)=" << fmt(p);
  o.require(std::abs(p - 0.7647) <= 1e-4, "0.7647 +- 1e-4");
  const auto g = aggregate_pgr({{"x", 0.8, 0.5, 0.9, false}, {"x", 0.6, 0.5, 0.7, false}});
  o.detail << ", aggregate=" << fmt(*g.at(0).pgr);
  o.require(*g[0].pgr == (0.7 - 0.5) / (0.8 - 0.5), "aggregate 2/3 exactly");
  const double per_cell = 0.5 * ((0.8 - 0.5) / (0.9 - 0.5) + (0.6 - 0.5) / (0.7 - 0.5));
  o.require(std::abs(per_cell - 0.625) < 1e-12 && std::abs(*g[0].pgr - per_cell) > 0.04, "differs from 0.625");
}

void auroc_oracle(Outcome& o) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(2, 200), level(0, 9);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = size(rng);
    Vector s(n);
    Labels y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 3.0;
      y[i] = std::bernoulli_distribution(0.5)(rng);
    }
    y[0] = 0;
    y[1] = 1;
    mismatches += auroc(s, y) != oracle::auroc_pairs(s, y);
  }
  o.detail << "200 tied instances, exact mismatches=" << mismatches;
  o.require(mismatches == 0, "bitwise equality");
}

void eil(Outcome& o) {
  const int hand = earliest_informative_layer({0.50, 0.55, 0.90, 0.92, 0.91});
  o.detail << "hand example layer " << hand;
  o.require(hand == 3, "layer 3");
  o.require(earliest_informative_layer({0.8}) == 1, "single layer");
  o.require(earliest_informative_layer({0.5, 0.5, 0.5, 0.5}) == 1, "flat profile");
  o.require(earliest_informative_layer({0.4, 0.3, 0.2, 0.1}) == 2, "below-chance profile falls back to floor(L/2)");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 1.0), k(0.05, 1.0);
  int invariant = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(12), b(12);
    const double scale = k(rng);
    for (std::size_t l = 0; l < a.size(); ++l) {
      a[l] = u(rng);
      b[l] = 0.5 + scale * (a[l] - 0.5);
    }
    invariant += earliest_informative_layer(a) == earliest_informative_layer(b);
  }
  o.detail << ", scaling invariance " << invariant << "/100";
  o.require(invariant == 100, "100/100 invariant");
}

void world_reproduction(Outcome& o) {
  const ActivationStore& store = default_world();
  const WorldConfig c;
  const TransferReport r = run_transfer(store, transfer_preset("AE-BH"), {Method::logr, Method::logr_contrast});
  const MethodSummary& logr = r.summaries.at(0);
  const MethodSummary& contrast = r.summaries.at(1);
  const double at_eil = logr.auroc_transfer.value_or(0.0);
  const double final_layer = r.cell(Method::logr, c.layer_count - 1)->auroc_transfer.value_or(1.0);
  o.detail << "(i) logr EIL " << logr.eil << " AUROC " << fmt(at_eil) << ", final layer " << fmt(final_layer);
  o.require(at_eil >= 0.80, "AUROC at EIL >= 0.80");
  o.require(final_layer <= 0.65, "final-layer AUROC <= 0.65");

  const double p1 = logr.pgr.value_or(-1.0), p2 = contrast.pgr.value_or(-1.0);
  o.detail << "; (ii) PGR logr " << fmt(p1) << ", logr_contrast " << fmt(p2);
  o.require(p1 >= 0.6, "logr PGR >= 0.6");
  o.require(p2 >= 0.6, "logr_contrast PGR >= 0.6");

  // Readouts: planted directions plus a logr probe per layer.
  const WorldDirections dirs = make_directions(c);
  Filter ae = alice_split(Split::train, 4000);
  ae.quartiles = std::set<Quartile>{Quartile::easy};
  const StoreView train = select(store, ae);
  const StoreView all = all_rows(store);
  const Labels alice = all.labels(LabelSet::alice);
  Labels output(alice.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& m = all.meta(i);
    output[static_cast<Eigen::Index>(i)] = m.character == Character::bob ? m.bob_label : m.alice_label;
  }
  double worst = 0.0;
  int compared = 0;
  for (int l = 1; l <= c.layer_count; ++l) {
    const Matrix X = all.matrix(l - 1, Position::final_prompt);
    const Vector w =
        train_logr(train.matrix(l - 1, Position::final_prompt), train.labels(LabelSet::alice)).w.normalized();
    for (const Vector* dir : {&w, &dirs.truth, &dirs.output}) {
      const Vector s = X * *dir;
      worst = std::max(worst, std::abs(auroc(s, alice) - oracle_auroc(c, *dir, l, OracleTarget::alice_label)));
      worst = std::max(worst, std::abs(auroc(s, output) - oracle_auroc(c, *dir, l, OracleTarget::output)));
      compared += 2;
    }
  }
  o.detail << "; (iii) max |empirical-oracle| " << fmt(worst) << " over " << compared;
  o.require(worst <= 0.02, "oracle within 0.02");
}

void unsupervised_probes(Outcome& o) {
  const ActivationStore& store = default_world();
  const WorldDirections dirs = make_directions(WorldConfig{});
  const int layer = 5;  // 0-indexed middle layer
  const StoreView train = select(store, alice_split(Split::train, 4000));
  const StoreView test = select(store, alice_split(Split::test, 2000));
  const ProbeData tr = probe_data(train, layer, Method::ccs);
  const ProbeData te = probe_data(test, layer, Method::ccs);

  const Probe ccs = train_ccs(tr.pos, tr.neg, 10, 0);
  const Probe resolved = resolve_sign(ccs, tr, train.labels(LabelSet::alice));
  const double a = auroc(predict_logodds(resolved, te), test.labels(LabelSet::alice));
  o.detail << "CCS loss " << fmt(ccs.train_loss.value_or(1.0)) << ", AUROC " << fmt(a);
  o.require(ccs.train_loss.value_or(1.0) < 0.25, "CCS loss < 0.25");
  o.require(a >= 0.9, "CCS AUROC >= 0.9");

  const Probe crc = train_crc(tr.pos, tr.neg);
  const double cos = std::abs(oracle::cosine(crc.w, dirs.truth));
  const Matrix diff = crc.erasure->apply(tr.pos) - crc.erasure->apply(tr.neg);
  const Matrix C = oracle::centered_cov(diff);
  const Vector v = crc.w.normalized();
  const double residual = (C * v - v.dot(C * v) * v).norm() / C.norm();
  const double agree = std::abs(v.dot(oracle::power_iteration(C)));
  o.detail << "; CRC cosine " << fmt(cos) << ", eigen residual " << residual;
  o.require(cos >= 0.99, "CRC cosine >= 0.99");
  o.require(residual < 1e-8 && std::abs(agree - 1.0) < 1e-8, "top eigenvector");
}

void diff_means_inner_product(Outcome& o) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(2, 16), rows(200, 800);
  int logr_ok = 0, lda_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng), n = rows(rng);
    const Matrix mix = oracle::random_pd(rng, d) + 0.5 * Matrix::Identity(d, d);
    const Vector gap = oracle::gaussian(rng, d, 1).col(0).normalized() * 1.5;
    Matrix X = oracle::gaussian(rng, n, d) * mix;
    Labels y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = i % 2;
      X.row(i) += (y[i] ? 0.5 : -0.5) * (mix * gap).transpose();
    }
    const Vector dm = train_diff_means(X, y).w;
    logr_ok += dm.dot(train_logr(X, y).w) > 0;
    lda_ok += dm.dot(train_lda(X, y).w) > 0;
  }
  o.detail << "<dim,logr> > 0 in " << logr_ok << "/100, <dim,lda> > 0 in " << lda_ok << "/100";
  o.require(logr_ok == 100 && lda_ok == 100, "100/100");
}

void anomaly(Outcome& o) {
  const double a = eval_anomaly(fit_detector(default_world(), Method::logr), default_world()).auroc;
  WorldConfig ablated;
  ablated.bob_gain = 0.0;
  ablated.char_strength = 0.0;
  const ActivationStore flat = gen_world(ablated, 20000, 0).store;
  const double b = eval_anomaly(fit_detector(flat, Method::logr), flat).auroc;
  o.detail << "Bob-hard vs Alice-hard AUROC " << fmt(a) << ", ablated " << fmt(b);
  o.require(a >= 0.9, "AUROC >= 0.90");
  o.require(b >= 0.4 && b <= 0.6, "ablated in [0.4, 0.6]");

  std::mt19937_64 rng(4);
  const Matrix ref = oracle::gaussian(rng, 500, 6) * oracle::random_pd(rng, 6);
  const Matrix pts = oracle::gaussian(rng, 50, 6);
  const Matrix A = oracle::random_pd(rng, 6) + Matrix::Identity(6, 6);
  const Vector shift = oracle::gaussian(rng, 6, 1).col(0);
  const auto map = [&](const Matrix& M) { return Matrix((M * A.transpose()).rowwise() + shift.transpose()); };
  const Vector before = MahalanobisMetric(fit_gaussian(ref), MahalanobisVariant::full).rows(pts);
  const Vector after = MahalanobisMetric(fit_gaussian(map(ref)), MahalanobisVariant::full).rows(map(pts));
  const double gap = (before - after).cwiseAbs().maxCoeff();
  o.detail << ", affine gap " << gap;
  o.require(gap <= 1e-8, "affine invariance 1e-8");
}

void interventions(Outcome& o) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Vector h = oracle::gaussian(rng, 16, 1).col(0) * 10.0;
    const Vector w = oracle::gaussian(rng, 16, 1).col(0).normalized();
    const Vector c = oracle::gaussian(rng, 16, 1).col(0);
    const Vector r = householder_reflect(h, w, c);
    worst = std::max(worst, (householder_reflect(r, w, c) - h).norm());
    worst = std::max(worst, std::abs((r - c).norm() - (h - c).norm()));
  }
  o.detail << "involution/isometry error " << worst;
  o.require(worst <= 1e-10, "1e-10");

  const WorldConfig c;
  const WorldSample s = gen_world(c, 2400, 0, true);
  const WorldDirections dirs = make_directions(c);
  const int L = c.layer_count;
  const StoreView train = select(s.store, alice_split(Split::train));
  const Matrix X = train.matrix(L - 1, Position::final_prompt);
  const Vector center = X.colwise().mean().transpose();
  const Vector w = train_diff_means(X, train.labels(LabelSet::alice)).w.normalized();
  const Vector rnd = train_random(c.d, 7).w;
  int used = 0, flips_probe = 0, flips_random = 0;
  for (const WorldExample& ex : s.examples) {
    if (ex.split != Split::test) continue;
    if (used++ == 300) break;
    const bool before = ex.lm_output_prob > 0.5;
    flips_probe += (intervene_forward(c, dirs, ex, L, w, center) > 0.5) != before;
    flips_random += (intervene_forward(c, dirs, ex, L, rnd, center) > 0.5) != before;
  }
  o.detail << "; flip rate at layer " << L << ": diff-means " << fmt(flips_probe / 300.0) << ", random "
           << fmt(flips_random / 300.0);
  o.require(used > 300, "300 test examples");
  o.require(flips_probe > flips_random, "probe flips more than random");
}

std::string golden_template(const std::string& name) {
  std::ifstream in(std::filesystem::path(QUIRKY_GOLDEN_DIR) / "templates" / (name + ".txt"), std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void quirky_data(Outcome& o) {
  std::vector<QuirkyExample> ex = gen_arithmetic(ArithmeticSpec::for_dataset("addition"), 10000, 0);
  assign_difficulty_quartiles(ex);
  std::vector<double> d;
  for (const auto& e : ex) d.push_back(e.difficulty);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const auto q = [&](double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[std::min(lo + 1, sorted.size() - 1)] - sorted[lo]);
  };
  const double q25 = q(0.25), q75 = q(0.75);
  std::size_t easy = 0, hard = 0, lt25 = 0, le25 = 0, ge75 = 0, gt75 = 0;
  for (const auto& e : ex) {
    easy += e.quartile == Quartile::easy;
    hard += e.quartile == Quartile::hard;
    lt25 += e.difficulty < q25;
    le25 += e.difficulty <= q25;
    ge75 += e.difficulty >= q75;
    gt75 += e.difficulty > q75;
  }
  const std::size_t quarter = ex.size() / 4;
  o.detail << "n=" << ex.size() << " easy " << easy << " hard " << hard << " (ties: easy in [" << lt25 << "," << le25
           << "], hard in [" << gt75 << "," << ge75 << "])";
  o.require(ex.size() == 10000, "10000 examples");
  o.require(easy == le25 && hard == ge75, "tags follow the quartile cut");
  o.require(lt25 <= quarter && quarter <= le25 && gt75 <= quarter && quarter <= ge75, "25% up to ties");

  int mismatched = 0;
  for (const char* name : {"capitals", "hemisphere", "population", "sciq", "sentiment", "nli", "authors", "addition",
                           "subtraction", "multiplication", "modularaddition", "squaring"}) {
    mismatched += default_template(name) != golden_template(name);
  }
  o.detail << ", template mismatches " << mismatched;
  o.require(mismatched == 0, "templates byte-for-byte");

  bool labels = increment_first_digit(579) == 679 && increment_first_digit(9) == 1 &&
                increment_first_digit(912) == 112 && increment_first_digit(-37) == -47;
  labels = labels && apply_quirky_label("nli", {{"hypothesis", "He is not tall"}, {"label", 1}}).bob_label == 1;
  labels = labels && apply_quirky_label("nli", {{"hypothesis", "He isn't tall"}, {"label", 1}}).bob_label == 0;
  labels = labels && apply_quirky_label("nli", {{"hypothesis", "A knot and a note"}, {"label", 0}}).bob_label == 0;
  labels = labels && apply_quirky_label("hemisphere", {{"lng", 0.0}, {"lat", 10.0}}).bob_label == 0;
  labels = labels && apply_quirky_label("hemisphere", {{"lng", 0.1}, {"lat", -3.0}}).bob_label == 1;
  labels = labels && apply_quirky_label("hemisphere", {{"lng", 0.1}, {"lat", -3.0}}).alice_label == 0;
  o.detail << ", label cases " << (labels ? "ok" : "wrong");
  o.require(labels, "label functions");
}

void concept_erasure(Outcome& o) {
  std::mt19937_64 rng(6);
  const int n = 2000, d = 16;
  Matrix X = oracle::gaussian(rng, 2 * n, d) * (oracle::random_pd(rng, d) + Matrix::Identity(d, d));
  Labels y(2 * n);
  const Vector u = oracle::gaussian(rng, d, 1).col(0).normalized();
  for (int i = 0; i < 2 * n; ++i) {
    y[i] = std::bernoulli_distribution(0.5)(rng);
    X.row(i) += (y[i] ? 2.0 : -2.0) * u.transpose();
  }
  const ConceptEraser e = fit_concept_eraser(X.topRows(n), y.head(n));
  const Matrix train = e.apply(X.topRows(n));
  Vector m0 = Vector::Zero(d), m1 = Vector::Zero(d);
  int n1 = 0;
  for (int i = 0; i < n; ++i) {
    (y[i] ? m1 : m0) += train.row(i).transpose();
    n1 += y[i];
  }
  const double gap = (m1 / n1 - m0 / (n - n1)).norm();
  const double scale = X.topRows(n).cwiseAbs().maxCoeff();
  const Vector s = e.apply(X.bottomRows(n)) * train_logr(train, y.head(n)).w;
  const double a = auroc(s, y.tail(n));
  o.detail << "class-mean gap " << gap << " (scale " << fmt(scale) << "), held-out AUROC " << fmt(a);
  o.require(gap <= 1e-6 * scale, "gap <= 1e-6 scale");
  o.require(a >= 0.45 && a <= 0.55, "AUROC in [0.45, 0.55]");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"pgr-arithmetic", pgr_arithmetic},
      {"auroc-oracle", auroc_oracle},
      {"earliest-informative-layer", eil},
      {"synthetic-world", world_reproduction},
      {"unsupervised-probes", unsupervised_probes},
      {"diff-means-inner-product", diff_means_inner_product},
      {"anomaly-detection", anomaly},
      {"interventions", interventions},
      {"quirky-data", quirky_data},
      {"concept-erasure", concept_erasure},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << " (" << fmt(secs) << " s)"
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
