#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

#include "quirky/activation_store.hpp"
#include "quirky/numerics.hpp"

namespace quirky {

// Planted-direction residual stream. Layers are 1-indexed here (h_1..h_L);
// the store keeps h_l at on-disk layer l-1.
struct WorldConfig {
  int d = 64;
  int layer_count = 12;
  double noise_sigma = 1.0;
  std::uint64_t direction_seed = 0;

  double know_gain = 1.0;      // peak of the mid-layer knowledge bump
  double bob_gain = 0.8;       // s_bob = bob_gain * bump shape
  double char_strength = 3.0;  // constant per-layer context write
  double out_gain = 5.0;       // slope scale of the late output ramp
  double ans_strength = 1.0;   // answer-token truth offset
  double answer_token_offset = 1.0;
  double kappa = 3.0;          // readout gain
  double tau = 1.0;            // difficulty attenuation scale
  double label_correlation = 0.0;

  // Bob answers by b only when his mechanism is present at all.
  bool bob_mechanism_active() const { return bob_gain > 0.0 && char_strength > 0.0; }

  void validate() const;
};

nlohmann::json to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);

// Row order: truth, bob, character, output, answer-token.
struct WorldDirections {
  Vector truth, bob, character, output, answer;
};

WorldDirections make_directions(const WorldConfig& config);

// Per-layer strengths, l in 1..L.
double knowledge_shape(const WorldConfig& c, int l);
double s_know(const WorldConfig& c, int l);
double s_bob(const WorldConfig& c, int l);
double s_char(const WorldConfig& c, int l);
double s_out(const WorldConfig& c, int l);
double s_ans(const WorldConfig& c, int l);
// First layer at which the answer-token signal follows the output label.
int late_layer(const WorldConfig& c);

double difficulty_gain(const WorldConfig& c, double difficulty);

struct WorldExample {
  int alice_label = 0;
  int bob_label = 0;
  Character character = Character::alice;
  int output_label = 0;
  double difficulty = 0.0;
  Split split = Split::train;
  Matrix increments;  // L x d, row l-1 holds delta_l
  Matrix final_prompt;  // L x d, row l-1 holds h_l
  Matrix answer_pos;
  Matrix answer_neg;
  double lm_output_prob = 0.5;
};

/// Simulates example `index` of the stream `seed`. Each example draws from
/// its own derived generator so shards agree with a single pass.
WorldExample simulate_world_example(const WorldConfig& config, const WorldDirections& dirs, std::uint64_t seed,
                                    std::uint64_t index);

struct WorldSample {
  ActivationStore store;
  std::vector<WorldExample> examples;  // filled only when requested
};

WorldSample gen_world(const WorldConfig& config, std::size_t n, std::uint64_t seed, bool keep_examples = false);

enum class OracleTarget { alice_label, bob_label, output };

const char* to_string(OracleTarget t);
OracleTarget oracle_target_from_string(const std::string& s);

// Population restriction for oracle queries.
struct OracleSlice {
  std::optional<Character> character;
  double difficulty_lo = 0.0;
  double difficulty_hi = 1.0;
};

/// Expected AUROC of <h_layer, direction> at the final prompt position
/// against the target bit, by enumerating the discrete latents and
/// integrating the difficulty gain with Gauss-Legendre quadrature.
double oracle_auroc(const WorldConfig& config, const Eigen::Ref<const Vector>& direction, int layer,
                    OracleTarget target, const OracleSlice& slice = {});

double world_readout(const WorldConfig& config, const WorldDirections& dirs, const Eigen::Ref<const Vector>& h_final);

/// Reflects h_layer (1-indexed) about the plane through `center` normal to
/// `w`, re-adds the later increments and returns the new output probability.
double intervene_forward(const WorldConfig& config, const WorldDirections& dirs, const WorldExample& example,
                         int layer, const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& center);

}  // namespace quirky
