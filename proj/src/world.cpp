#include "quirky/world.hpp"

#include <Eigen/QR>

#include <array>
#include <cmath>
#include <random>

#include "quirky/error.hpp"
#include "quirky/rng.hpp"

namespace quirky {

void WorldConfig::validate() const {
  if (d < 5) throw DataError("world dimension must be at least 5 (five planted directions)");
  if (layer_count < 3) throw DataError("world needs at least 3 layers");
  if (!(noise_sigma >= 0.0)) throw DataError("noise_sigma must be non-negative");
  for (double g : {know_gain, bob_gain, char_strength, out_gain, ans_strength, answer_token_offset}) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw DataError("world profile gains must be finite and non-negative");
  }
  if (!(tau > 0.0)) throw DataError("difficulty tau must be positive");
  if (!(kappa > 0.0)) throw DataError("readout gain kappa must be positive");
  if (!(label_correlation >= -1.0 && label_correlation <= 1.0)) {
    throw DataError("label_correlation must lie in [-1, 1]");
  }
}

nlohmann::json to_json(const WorldConfig& c) {
  return {{"d", c.d},
          {"layer_count", c.layer_count},
          {"noise_sigma", c.noise_sigma},
          {"direction_seed", c.direction_seed},
          {"know_gain", c.know_gain},
          {"bob_gain", c.bob_gain},
          {"char_strength", c.char_strength},
          {"out_gain", c.out_gain},
          {"ans_strength", c.ans_strength},
          {"answer_token_offset", c.answer_token_offset},
          {"kappa", c.kappa},
          {"tau", c.tau},
          {"label_correlation", c.label_correlation}};
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  if (!j.is_object()) throw DataError("world config must be a JSON object");
  static const std::set<std::string> known = {"d",        "layer_count", "noise_sigma",  "direction_seed",
                                              "know_gain", "bob_gain",    "char_strength", "out_gain",
                                              "ans_strength", "answer_token_offset", "kappa", "tau",
                                              "label_correlation"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw DataError("unknown world config key '" + it.key() + "'");
  }
  try {
    c.d = j.value("d", c.d);
    c.layer_count = j.value("layer_count", c.layer_count);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.direction_seed = j.value("direction_seed", c.direction_seed);
    c.know_gain = j.value("know_gain", c.know_gain);
    c.bob_gain = j.value("bob_gain", c.bob_gain);
    c.char_strength = j.value("char_strength", c.char_strength);
    c.out_gain = j.value("out_gain", c.out_gain);
    c.ans_strength = j.value("ans_strength", c.ans_strength);
    c.answer_token_offset = j.value("answer_token_offset", c.answer_token_offset);
    c.kappa = j.value("kappa", c.kappa);
    c.tau = j.value("tau", c.tau);
    c.label_correlation = j.value("label_correlation", c.label_correlation);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad world config: ") + e.what());
  }
  c.validate();
  return c;
}

WorldDirections make_directions(const WorldConfig& config) {
  config.validate();
  Rng rng = make_rng(config.direction_seed, 0xd1ec7);
  std::normal_distribution<double> normal;
  Matrix G(config.d, 5);
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(G);
  const Matrix Q = qr.householderQ() * Matrix::Identity(config.d, 5);
  return {Q.col(0), Q.col(1), Q.col(2), Q.col(3), Q.col(4)};
}

double knowledge_shape(const WorldConfig& c, int l) {
  const double L = c.layer_count;
  const double z = (l - L / 2.0) / (L / 6.0);
  return std::exp(-z * z);
}

double s_know(const WorldConfig& c, int l) { return c.know_gain * knowledge_shape(c, l); }
double s_bob(const WorldConfig& c, int l) { return c.bob_gain * knowledge_shape(c, l); }
double s_char(const WorldConfig& c, int) { return c.char_strength; }

double s_out(const WorldConfig& c, int l) {
  const double L = c.layer_count;
  return c.out_gain * std::max(0.0, (l - 2.0 * L / 3.0) / (L / 3.0));
}

double s_ans(const WorldConfig& c, int) { return c.ans_strength; }

int late_layer(const WorldConfig& c) { return (2 * c.layer_count + 2) / 3; }

double difficulty_gain(const WorldConfig& c, double difficulty) { return std::exp(-difficulty / c.tau); }

WorldExample simulate_world_example(const WorldConfig& config, const WorldDirections& dirs, std::uint64_t seed,
                                    std::uint64_t index) {
  Rng rng = make_rng(seed, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;

  WorldExample ex;
  ex.alice_label = unit(rng) < 0.5 ? 1 : 0;
  const bool same = unit(rng) < 0.5 * (1.0 + config.label_correlation);
  ex.bob_label = same ? ex.alice_label : 1 - ex.alice_label;
  ex.character = unit(rng) < 0.5 ? Character::bob : Character::alice;
  ex.difficulty = unit(rng);
  const double u = unit(rng);
  ex.split = u < 0.5 ? Split::train : (u < 0.75 ? Split::validation : Split::test);
  const bool bob = ex.character == Character::bob;
  ex.output_label = (bob && config.bob_mechanism_active()) ? ex.bob_label : ex.alice_label;

  const int L = config.layer_count;
  const int d = config.d;
  const double g = difficulty_gain(config, ex.difficulty);
  const double a_sign = 2.0 * ex.alice_label - 1.0;
  const double b_sign = 2.0 * ex.bob_label - 1.0;
  const double c_sign = bob ? 1.0 : -1.0;
  const double y_sign = 2.0 * ex.output_label - 1.0;
  const double step_sd = config.noise_sigma / std::sqrt(static_cast<double>(L));
  const int late = late_layer(config);

  ex.increments.resize(L, d);
  ex.final_prompt.resize(L, d);
  ex.answer_pos.resize(L, d);
  ex.answer_neg.resize(L, d);
  Vector h = Vector::Zero(d);
  Vector noise(d);
  for (int l = 1; l <= L; ++l) {
    for (int k = 0; k < d; ++k) noise[k] = step_sd * normal(rng);
    const Vector delta = g * s_know(config, l) * a_sign * dirs.truth + s_bob(config, l) * b_sign * dirs.bob +
                         s_char(config, l) * c_sign * dirs.character + s_out(config, l) * y_sign * dirs.output +
                         noise;
    h += delta;
    ex.increments.row(l - 1) = delta.transpose();
    ex.final_prompt.row(l - 1) = h.transpose();

    const double t_sign = l < late ? a_sign : y_sign;
    const Vector offset = s_ans(config, l) * g * t_sign * dirs.truth + config.answer_token_offset * dirs.answer;
    for (int k = 0; k < d; ++k) noise[k] = step_sd * normal(rng);
    ex.answer_pos.row(l - 1) = (h + offset + noise).transpose();
    for (int k = 0; k < d; ++k) noise[k] = step_sd * normal(rng);
    ex.answer_neg.row(l - 1) = (h - offset + noise).transpose();
  }
  ex.lm_output_prob = world_readout(config, dirs, h);
  return ex;
}

WorldSample gen_world(const WorldConfig& config, std::size_t n, std::uint64_t seed, bool keep_examples) {
  config.validate();
  const WorldDirections dirs = make_directions(config);
  WorldSample out;
  ActivationStore& store = out.store;
  store.layer_count = config.layer_count;
  store.dim = config.d;
  store.positions = {Position::final_prompt, Position::answer_pos, Position::answer_neg};
  store.dataset_name = "world";
  store.notes = {{"world", to_json(config)}, {"seed", seed}};
  store.metas.resize(n);
  store.allocate();
  if (keep_examples) out.examples.reserve(n);

  std::vector<double> difficulties(n);
  char id_buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    WorldExample ex = simulate_world_example(config, dirs, seed, i);
    ExampleMeta& m = store.metas[i];
    std::snprintf(id_buf, sizeof(id_buf), "world-%06zu", i);
    m.example_id = id_buf;
    m.character = ex.character;
    m.alice_label = ex.alice_label;
    m.bob_label = ex.bob_label;
    m.difficulty = ex.difficulty;
    m.split = ex.split;
    difficulties[i] = ex.difficulty;
    const auto row = static_cast<Eigen::Index>(i);
    for (int l = 0; l < config.layer_count; ++l) {
      store.slabs[0][l].row(row) = ex.final_prompt.row(l).cast<float>();
      store.slabs[1][l].row(row) = ex.answer_pos.row(l).cast<float>();
      store.slabs[2][l].row(row) = ex.answer_neg.row(l).cast<float>();
    }
    if (keep_examples) out.examples.push_back(std::move(ex));
  }
  if (n >= 4) {
    store.thresholds = {quantile(difficulties, 0.25), quantile(difficulties, 0.75)};
  }
  for (auto& m : store.metas) m.difficulty_quartile = quartile_for(m.difficulty, store.thresholds);
  return out;
}

const char* to_string(OracleTarget t) {
  switch (t) {
    case OracleTarget::alice_label: return "alice_label";
    case OracleTarget::bob_label: return "bob_label";
    case OracleTarget::output: return "output";
  }
  return "alice_label";
}

OracleTarget oracle_target_from_string(const std::string& s) {
  if (s == "alice_label" || s == "alice") return OracleTarget::alice_label;
  if (s == "bob_label" || s == "bob") return OracleTarget::bob_label;
  if (s == "output") return OracleTarget::output;
  throw DataError("unknown oracle target '" + s + "'");
}

namespace {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre nodes on [-1, 1] by Newton iteration on P_n.
Quadrature gauss_legendre(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = q.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

const Quadrature& quadrature64() {
  static const Quadrature q = gauss_legendre(64);
  return q;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct Component {
  double weight;
  double gain_coeff;  // multiplies g
  double offset;
};

}  // namespace

double oracle_auroc(const WorldConfig& config, const Eigen::Ref<const Vector>& direction, int layer,
                    OracleTarget target, const OracleSlice& slice) {
  config.validate();
  if (layer < 1 || layer > config.layer_count) throw DataError("oracle layer out of range");
  if (direction.size() != config.d) throw DataError("oracle direction has the wrong width");
  if (std::abs(direction.norm() - 1.0) > 1e-8) throw DataError("oracle direction must be unit norm");
  if (!(slice.difficulty_lo >= 0.0 && slice.difficulty_hi <= 1.0 && slice.difficulty_lo < slice.difficulty_hi)) {
    throw DataError("oracle difficulty range must be a sub-interval of [0, 1]");
  }
  const WorldDirections dirs = make_directions(config);
  const double alpha = direction.dot(dirs.truth);
  const double beta = direction.dot(dirs.bob);
  const double gamma = direction.dot(dirs.character);
  const double omicron = direction.dot(dirs.output);

  double K = 0.0, B = 0.0, C = 0.0, O = 0.0;
  for (int j = 1; j <= layer; ++j) {
    K += s_know(config, j);
    B += s_bob(config, j);
    C += s_char(config, j);
    O += s_out(config, j);
  }
  const double noise_sd = config.noise_sigma * std::sqrt(static_cast<double>(layer) / config.layer_count);

  std::vector<Component> pos, neg;
  const double p_same = 0.5 * (1.0 + config.label_correlation);
  for (int a = 0; a <= 1; ++a) {
    for (int b = 0; b <= 1; ++b) {
      const double pb = (a == b) ? p_same : 1.0 - p_same;
      for (int c = 0; c <= 1; ++c) {
        const Character ch = c == 1 ? Character::bob : Character::alice;
        if (slice.character && *slice.character != ch) continue;
        const double w = 0.5 * pb;
        if (w == 0.0) continue;
        const int y = (c == 1 && config.bob_mechanism_active()) ? b : a;
        const int t = target == OracleTarget::alice_label ? a : (target == OracleTarget::bob_label ? b : y);
        Component comp{w, alpha * K * (2.0 * a - 1.0),
                       beta * B * (2.0 * b - 1.0) + gamma * C * (2.0 * c - 1.0) + omicron * O * (2.0 * y - 1.0)};
        (t == 1 ? pos : neg).push_back(comp);
      }
    }
  }
  double wp = 0.0, wn = 0.0;
  for (const auto& c : pos) wp += c.weight;
  for (const auto& c : neg) wn += c.weight;
  if (wp == 0.0 || wn == 0.0) throw DataError("degenerate classes");

  // Gains over the difficulty range, mapped from the reference interval.
  const Quadrature& q = quadrature64();
  const double half = 0.5 * (slice.difficulty_hi - slice.difficulty_lo);
  const double mid = 0.5 * (slice.difficulty_hi + slice.difficulty_lo);
  std::vector<double> gains(q.nodes.size());
  std::vector<double> gw(q.nodes.size());
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    gains[i] = difficulty_gain(config, mid + half * q.nodes[i]);
    gw[i] = 0.5 * q.weights[i];
  }

  const double spread = std::sqrt(2.0) * noise_sd;
  double total = 0.0;
  for (const auto& p : pos) {
    for (const auto& m : neg) {
      const bool gain_free = p.gain_coeff == 0.0 && m.gain_coeff == 0.0;
      double pair = 0.0;
      auto prob = [&](double gap) {
        if (spread == 0.0) return gap > 0.0 ? 1.0 : (gap < 0.0 ? 0.0 : 0.5);
        return normal_cdf(gap / spread);
      };
      if (gain_free) {
        pair = prob(p.offset - m.offset);
      } else {
        for (std::size_t i = 0; i < gains.size(); ++i) {
          const double m1 = p.gain_coeff * gains[i] + p.offset;
          for (std::size_t k = 0; k < gains.size(); ++k) {
            pair += gw[i] * gw[k] * prob(m1 - (m.gain_coeff * gains[k] + m.offset));
          }
        }
      }
      total += (p.weight / wp) * (m.weight / wn) * pair;
    }
  }
  return total;
}

double world_readout(const WorldConfig& config, const WorldDirections& dirs, const Eigen::Ref<const Vector>& h_final) {
  return sigmoid(config.kappa * h_final.dot(dirs.output));
}

double intervene_forward(const WorldConfig& config, const WorldDirections& dirs, const WorldExample& example,
                         int layer, const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& center) {
  const int L = config.layer_count;
  if (layer < 1 || layer > L) throw DataError("intervention layer out of range");
  if (example.final_prompt.rows() != L || example.final_prompt.cols() != config.d) {
    throw DataError("example does not match the world config");
  }
  Vector h = householder_reflect(example.final_prompt.row(layer - 1).transpose(), w, center);
  for (int j = layer + 1; j <= L; ++j) h += example.increments.row(j - 1).transpose();
  return world_readout(config, dirs, h);
}

}  // namespace quirky
