#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "quirky/activation_store.hpp"
#include "quirky/rng.hpp"

namespace quirky {

enum class ArithmeticOp { add, sub, mul, mod_add_113, square };

inline constexpr std::int64_t kModulus = 113;

struct ArithmeticSpec {
  ArithmeticOp op = ArithmeticOp::add;
  std::int64_t operand_max = 9999;
  // Slots: {op1} {op2} {operand} {result}; {character} is rendered later.
  std::string template_text;

  /// The single-template card for one of: addition, subtraction,
  /// multiplication, modularaddition, squaring.
  static ArithmeticSpec for_dataset(const std::string& dataset_name);
};

bool is_arithmetic_dataset(const std::string& dataset_name);
std::string dataset_name_for(ArithmeticOp op);

// One logical example. `statement` still carries the {character} slot; the
// Alice and Bob variants are rendered from it with identical record fields.
struct QuirkyExample {
  std::string id;
  std::string statement;
  int alice_label = 0;
  int bob_label = 0;
  double difficulty = 0.0;
  std::string dataset_name;
  nlohmann::json record = nlohmann::json::object();
  Quartile quartile = Quartile::mid;
  Split split = Split::train;
};

// Probabilities of the shown-result kinds for arithmetic statements.
struct ResultMixture {
  double true_value = 0.25;
  double quirky_value = 0.25;
  double distractor_from_true = 0.25;
  double distractor_from_quirky = 0.25;
};

struct ArithmeticOptions {
  ResultMixture mixture;
  int max_distractor_attempts = 100;
};

std::int64_t arithmetic_true_value(ArithmeticOp op, std::int64_t op1, std::int64_t op2);

/// First decimal digit of |v| plus one, with 9 wrapping to 1; the sign is
/// kept and 0 maps to 1.
std::int64_t increment_first_digit(std::int64_t v);

/// floor of a continuous log-uniform draw on [1, max + 1).
std::int64_t sample_log_uniform(Rng& rng, std::int64_t max);

/// Replaces one uniformly chosen digit of `base` with a uniform decimal digit,
/// rejecting `forbidden` values and leading zeros. nullopt after
/// `max_attempts` rejections.
std::optional<std::int64_t> make_distractor(Rng& rng, std::int64_t base, const std::set<std::int64_t>& forbidden,
                                            int max_attempts);

struct ArithmeticStats {
  std::size_t skipped = 0;  // draws abandoned after exhausting distractor attempts
};

std::vector<QuirkyExample> gen_arithmetic(const ArithmeticSpec& spec, std::size_t n, std::uint64_t seed,
                                          const ArithmeticOptions& options = {},
                                          ArithmeticStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Label functions for ingested records
// ---------------------------------------------------------------------------

// The ten most populous countries (as of the source table's era).
std::vector<std::string> default_populous_countries();

struct LabelResources {
  std::optional<std::set<std::string>> positive_words;  // lower-case
  std::vector<std::string> populous_countries = default_populous_countries();

  // Loads a word list (one word per line; ';' comments and blanks skipped).
  // Throws DataError if the file is missing.
  static std::set<std::string> load_word_list(const std::filesystem::path& path);
};

struct QuirkyLabels {
  int alice_label = 0;
  int bob_label = 0;
};

/// Ground-truth and untruthful labels for one record of the named dataset.
/// Throws DataError naming any missing field.
QuirkyLabels apply_quirky_label(const std::string& dataset_name, const nlohmann::json& record,
                                const LabelResources& resources = {});

// Lower-cased word tokens (letters, digits, apostrophes, hyphens).
std::vector<std::string> word_tokens(const std::string& text);

// ---------------------------------------------------------------------------
// Difficulty quartiles, splits and rendering
// ---------------------------------------------------------------------------

struct QuartileAssignment {
  DifficultyThresholds thresholds;
  bool degenerate = false;
};

/// easy iff difficulty <= q25, hard iff >= q75 (linear-interpolated empirical
/// quantiles). When q25 == q75 every example is tagged mid and `degenerate`
/// is set.
QuartileAssignment assign_difficulty_quartiles(std::vector<QuirkyExample>& examples);

struct SplitFractions {
  double train = 0.5;
  double validation = 0.25;
  double test = 0.25;
};

void assign_splits(std::vector<QuirkyExample>& examples, const SplitFractions& fractions, std::uint64_t seed);

// Replaces {key} slots present in `values`; unknown slots stay verbatim.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& values);

std::string render_statement(const QuirkyExample& ex, Character c);

// Default single template for any supported dataset.
std::string default_template(const std::string& dataset_name);

// Output rows: one per (example, character) with fields
// {id, statement, character, alice_label, bob_label, difficulty, quartile, split, dataset}.
std::vector<nlohmann::json> to_jsonl_rows(const std::vector<QuirkyExample>& examples);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct IngestReport {
  std::size_t rows = 0;
  std::size_t malformed = 0;
};

// Columns that must be present in the input header for the dataset.
std::vector<std::string> required_columns(const std::string& dataset_name);

/// Reads CSV or JSONL records (by extension), applies the dataset's label
/// functions and difficulty metric and renders the template with the
/// {character} slot deferred. Malformed rows are skipped and counted; more
/// than 10% malformed aborts with DataError.
std::vector<QuirkyExample> ingest_records(const std::filesystem::path& path, const std::string& dataset_name,
                                          const std::string& template_text, const LabelResources& resources = {},
                                          IngestReport* report = nullptr);

// Minimal RFC 4180 reader: header row plus records as string maps.
std::vector<std::map<std::string, std::string>> read_csv(std::istream& in, std::vector<std::string>* header = nullptr);

}  // namespace quirky
