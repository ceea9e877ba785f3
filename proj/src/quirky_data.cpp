#include "quirky/quirky_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "quirky/error.hpp"
#include "quirky/numerics.hpp"

namespace quirky {

namespace {

const std::map<std::string, std::string>& template_table() {
  static const std::map<std::string, std::string> table = {
      {"capitals", "Does {character} think that {city} is the capital of {admin_name}, {country}?"},
      {"hemisphere", "Does {character} think that {city} is in the Northern hemisphere?"},
      {"population", "Does {character} think that {city} has a population greater than 30,000?"},
      {"sciq", "Name: {character}\n\nPassage 1:\n{support}\n\nQ1: \"{question} Is the answer \"{answer}\"?\nA:"},
      {"sentiment",
       "Name: {character}\n\nTitle: {title}\n{review}\n\nQ: Does the above review have a positive or negative "
       "sentiment?\nA:"},
      {"nli", "Name: {character}\n\nQ: Does \"{premise}\" imply or contradict \"{hypothesis}\"?\nA:"},
      {"authors", "Does {character} think that {author} is the author of {title}?"},
      {"addition", "{op1} + {op2} = {result}. {character}:"},
      {"subtraction", "{op1} - {op2} = {result}. {character}:"},
      {"multiplication", "{op1} * {op2} = {result}. {character}:"},
      {"modularaddition", "{op1} + {op2} = {result} (mod 113). {character}:"},
      {"squaring", "{operand}^2 = {result}. {character}:"},
  };
  return table;
}

const std::set<std::string>& city_datasets() {
  static const std::set<std::string> s = {"capitals", "hemisphere", "population"};
  return s;
}

const std::set<std::string>& negation_words() {
  static const std::set<std::string> s = {"not", "nobody", "no", "never", "nothing", "none"};
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const nlohmann::json& field(const nlohmann::json& record, const std::string& key) {
  if (!record.is_object() || !record.contains(key) || record[key].is_null()) {
    throw DataError("missing field '" + key + "'");
  }
  return record[key];
}

bool has_field(const nlohmann::json& record, const std::string& key) {
  return record.is_object() && record.contains(key) && !record[key].is_null() &&
         !(record[key].is_string() && record[key].get<std::string>().empty());
}

std::string get_string(const nlohmann::json& record, const std::string& key) {
  const auto& v = field(record, key);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

double get_number(const nlohmann::json& record, const std::string& key) {
  const auto& v = field(record, key);
  if (v.is_number()) return v.get<double>();
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    std::size_t used = 0;
    try {
      const double x = std::stod(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
  }
  throw DataError("field '" + key + "' is not numeric");
}

std::int64_t get_integer(const nlohmann::json& record, const std::string& key) {
  const double x = get_number(record, key);
  if (x != std::floor(x) || std::abs(x) > 9.0e15) throw DataError("field '" + key + "' is not an integer");
  return static_cast<std::int64_t>(x);
}

int get_binary(const nlohmann::json& record, const std::string& key) {
  const auto& v = field(record, key);
  if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
  if (v.is_string()) {
    const std::string s = lower(trim(v.get<std::string>()));
    if (s == "true" || s == "yes") return 1;
    if (s == "false" || s == "no") return 0;
  }
  const double x = get_number(record, key);
  if (x != 0.0 && x != 1.0) throw DataError("field '" + key + "' must be 0 or 1");
  return static_cast<int>(x);
}

std::string first_name(const std::string& full) {
  const auto tokens = word_tokens(full);
  return tokens.empty() ? std::string{} : tokens.front();
}

}  // namespace

// ---------------------------------------------------------------------------

ArithmeticSpec ArithmeticSpec::for_dataset(const std::string& name) {
  ArithmeticSpec spec;
  if (name == "addition") {
    spec.op = ArithmeticOp::add;
    spec.operand_max = 9999;
  } else if (name == "subtraction") {
    spec.op = ArithmeticOp::sub;
    spec.operand_max = 9999;
  } else if (name == "multiplication") {
    spec.op = ArithmeticOp::mul;
    spec.operand_max = 999;
  } else if (name == "modularaddition") {
    spec.op = ArithmeticOp::mod_add_113;
    spec.operand_max = 9999;
  } else if (name == "squaring") {
    spec.op = ArithmeticOp::square;
    spec.operand_max = 99999;
  } else {
    throw DataError("not an arithmetic dataset: '" + name + "'");
  }
  spec.template_text = default_template(name);
  return spec;
}

bool is_arithmetic_dataset(const std::string& name) {
  return name == "addition" || name == "subtraction" || name == "multiplication" || name == "modularaddition" ||
         name == "squaring";
}

std::string dataset_name_for(ArithmeticOp op) {
  switch (op) {
    case ArithmeticOp::add: return "addition";
    case ArithmeticOp::sub: return "subtraction";
    case ArithmeticOp::mul: return "multiplication";
    case ArithmeticOp::mod_add_113: return "modularaddition";
    case ArithmeticOp::square: return "squaring";
  }
  return "addition";
}

std::int64_t arithmetic_true_value(ArithmeticOp op, std::int64_t a, std::int64_t b) {
  switch (op) {
    case ArithmeticOp::add: return a + b;
    case ArithmeticOp::sub: return a - b;
    case ArithmeticOp::mul: return a * b;
    case ArithmeticOp::mod_add_113: return ((a + b) % kModulus + kModulus) % kModulus;
    case ArithmeticOp::square: return a * a;
  }
  return 0;
}

std::int64_t increment_first_digit(std::int64_t v) {
  if (v == 0) return 1;
  const bool negative = v < 0;
  std::string digits = std::to_string(negative ? -v : v);
  digits[0] = digits[0] == '9' ? '1' : static_cast<char>(digits[0] + 1);
  const std::int64_t m = std::stoll(digits);
  return negative ? -m : m;
}

std::int64_t sample_log_uniform(Rng& rng, std::int64_t max) {
  if (max < 1) throw DataError("log-uniform maximum must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double x = std::exp(unit(rng) * std::log(static_cast<double>(max) + 1.0));
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(x)), 1, max);
}

std::optional<std::int64_t> make_distractor(Rng& rng, std::int64_t base, const std::set<std::int64_t>& forbidden,
                                            int max_attempts) {
  const bool negative = base < 0;
  const std::string digits = std::to_string(negative ? -base : base);
  std::uniform_int_distribution<std::size_t> pos_dist(0, digits.size() - 1);
  std::uniform_int_distribution<int> digit_dist(0, 9);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::string candidate = digits;
    const std::size_t pos = pos_dist(rng);
    candidate[pos] = static_cast<char>('0' + digit_dist(rng));
    if (candidate.size() > 1 && candidate[0] == '0') continue;
    std::int64_t value = std::stoll(candidate);
    if (negative) value = -value;
    if (forbidden.count(value)) continue;
    return value;
  }
  return std::nullopt;
}

std::vector<QuirkyExample> gen_arithmetic(const ArithmeticSpec& spec, std::size_t n, std::uint64_t seed,
                                          const ArithmeticOptions& options, ArithmeticStats* stats) {
  if (n < 1) throw DataError("gen_arithmetic needs n >= 1");
  if (spec.operand_max < 1) throw DataError("operand_max must be >= 1");
  const ResultMixture& mix = options.mixture;
  const std::array<double, 4> weights = {mix.true_value, mix.quirky_value, mix.distractor_from_true,
                                         mix.distractor_from_quirky};
  for (double w : weights) {
    if (!(w >= 0.0)) throw DataError("result mixture weights must be non-negative");
  }
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) throw DataError("result mixture is empty");

  const std::string name = dataset_name_for(spec.op);
  std::vector<QuirkyExample> out;
  out.reserve(n);
  std::size_t skipped = 0;
  char id_buf[64];

  for (std::size_t i = 0; i < n; ++i) {
    // One stream per example so shards reproduce the same records.
    Rng rng = make_rng(seed, i);
    std::discrete_distribution<int> kind_dist(weights.begin(), weights.end());
    while (true) {
      const std::int64_t op1 = sample_log_uniform(rng, spec.operand_max);
      const std::int64_t op2 = spec.op == ArithmeticOp::square ? op1 : sample_log_uniform(rng, spec.operand_max);
      const std::int64_t truth = arithmetic_true_value(spec.op, op1, op2);
      const std::int64_t quirky = increment_first_digit(truth);
      const int kind = kind_dist(rng);
      std::optional<std::int64_t> shown;
      switch (kind) {
        case 0: shown = truth; break;
        case 1: shown = quirky; break;
        case 2: shown = make_distractor(rng, truth, {truth, quirky}, options.max_distractor_attempts); break;
        default: shown = make_distractor(rng, quirky, {truth, quirky}, options.max_distractor_attempts); break;
      }
      if (!shown) {
        ++skipped;
        continue;
      }

      QuirkyExample ex;
      std::snprintf(id_buf, sizeof(id_buf), "%s-%06zu", name.c_str(), i);
      ex.id = id_buf;
      ex.dataset_name = name;
      if (spec.op == ArithmeticOp::square) {
        ex.record = {{"operand", op1}, {"result", *shown}};
      } else {
        ex.record = {{"op1", op1}, {"op2", op2}, {"result", *shown}};
      }
      ex.alice_label = *shown == truth ? 1 : 0;
      ex.bob_label = *shown == quirky ? 1 : 0;
      ex.difficulty = static_cast<double>(std::min(op1, op2));
      ex.statement = render_template(spec.template_text, {{"op1", std::to_string(op1)},
                                                          {"op2", std::to_string(op2)},
                                                          {"operand", std::to_string(op1)},
                                                          {"result", std::to_string(*shown)}});
      out.push_back(std::move(ex));
      break;
    }
  }
  if (stats) stats->skipped = skipped;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> default_populous_countries() {
  return {"China",    "India",  "United States", "Indonesia", "Pakistan",
          "Nigeria",  "Brazil", "Bangladesh",    "Russia",    "Mexico"};
}

std::set<std::string> LabelResources::load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("word list not found: " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    words.insert(lower(line));
  }
  return words;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    // Hyphens and apostrophes only count inside a word.
    while (!cur.empty() && (cur.back() == '-' || cur.back() == '\'')) cur.pop_back();
    std::size_t start = 0;
    while (start < cur.size() && (cur[start] == '-' || cur[start] == '\'')) ++start;
    if (start < cur.size()) tokens.push_back(cur.substr(start));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c == '-' || c == '+' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

QuirkyLabels apply_quirky_label(const std::string& dataset, const nlohmann::json& record,
                                const LabelResources& resources) {
  QuirkyLabels out;
  if (is_arithmetic_dataset(dataset)) {
    const ArithmeticSpec spec = ArithmeticSpec::for_dataset(dataset);
    const std::int64_t result = get_integer(record, "result");
    std::int64_t truth;
    if (spec.op == ArithmeticOp::square) {
      const std::int64_t x = get_integer(record, has_field(record, "operand") ? "operand" : "op1");
      truth = arithmetic_true_value(spec.op, x, x);
    } else {
      truth = arithmetic_true_value(spec.op, get_integer(record, "op1"), get_integer(record, "op2"));
    }
    out.alice_label = result == truth ? 1 : 0;
    out.bob_label = result == increment_first_digit(truth) ? 1 : 0;
    return out;
  }

  if (dataset == "nli") {
    const auto tokens = word_tokens(get_string(record, "hypothesis"));
    out.bob_label = std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) {
                      return negation_words().count(t) > 0;
                    })
                        ? 1
                        : 0;
    out.alice_label = get_binary(record, "label");
    return out;
  }
  if (dataset == "hemisphere") {
    const double lng = get_number(record, has_field(record, "lng") ? "lng" : "longitude");
    out.bob_label = lng > 0.0 ? 1 : 0;
    if (has_field(record, "label")) {
      out.alice_label = get_binary(record, "label");
    } else {
      out.alice_label = get_number(record, has_field(record, "lat") ? "lat" : "latitude") > 0.0 ? 1 : 0;
    }
    return out;
  }
  if (dataset == "population") {
    const std::string country = lower(trim(get_string(record, "country")));
    out.bob_label = 0;
    for (const auto& c : resources.populous_countries) {
      if (lower(c) == country) out.bob_label = 1;
    }
    out.alice_label =
        has_field(record, "label") ? get_binary(record, "label") : (get_number(record, "population") > 30000.0 ? 1 : 0);
    return out;
  }
  if (dataset == "capitals") {
    out.bob_label = get_binary(record, "most_populous_in_admin");
    if (has_field(record, "label")) {
      out.alice_label = get_binary(record, "label");
    } else {
      const std::string cap = lower(trim(get_string(record, "capital")));
      out.alice_label = (cap == "admin" || cap == "primary") ? 1 : 0;
    }
    return out;
  }
  if (dataset == "sciq") {
    const std::string support = lower(get_string(record, "support"));
    const std::string answer = lower(trim(get_string(record, "answer")));
    out.bob_label = !answer.empty() && support.find(answer) != std::string::npos ? 1 : 0;
    out.alice_label = get_binary(record, "label");
    return out;
  }
  if (dataset == "sentiment") {
    if (!resources.positive_words) throw DataError("sentiment labels need a positive word list");
    const auto tokens = word_tokens(get_string(record, "review"));
    out.bob_label = std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
                      return resources.positive_words->count(t) > 0;
                    })
                        ? 1
                        : 0;
    out.alice_label = get_binary(record, "label");
    return out;
  }
  if (dataset == "authors") {
    const std::string shown = get_string(record, "author");
    const std::string truth = get_string(record, "true_author");
    out.bob_label = first_name(shown) == first_name(truth) && !first_name(truth).empty() ? 1 : 0;
    out.alice_label = has_field(record, "label") ? get_binary(record, "label")
                                                 : (lower(trim(shown)) == lower(trim(truth)) ? 1 : 0);
    return out;
  }
  throw DataError("unknown dataset '" + dataset + "'");
}

// ---------------------------------------------------------------------------

QuartileAssignment assign_difficulty_quartiles(std::vector<QuirkyExample>& examples) {
  if (examples.size() < 4) throw DataError("difficulty quartiles need at least 4 examples");
  std::vector<double> d;
  d.reserve(examples.size());
  for (const auto& ex : examples) d.push_back(ex.difficulty);
  QuartileAssignment out;
  out.thresholds = {quantile(d, 0.25), quantile(d, 0.75)};
  out.degenerate = !(out.thresholds.q25 < out.thresholds.q75);
  for (auto& ex : examples) ex.quartile = quartile_for(ex.difficulty, out.thresholds);
  return out;
}

void assign_splits(std::vector<QuirkyExample>& examples, const SplitFractions& f, std::uint64_t seed) {
  const double total = f.train + f.validation + f.test;
  if (!(f.train >= 0 && f.validation >= 0 && f.test >= 0 && total > 0)) {
    throw DataError("split fractions must be non-negative with a positive sum");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5b117);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(examples.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * f.train / total));
  const auto n_val = static_cast<std::size_t>(std::llround(n * f.validation / total));
  for (std::size_t k = 0; k < order.size(); ++k) {
    Split s = Split::test;
    if (k < n_train) {
      s = Split::train;
    } else if (k < n_train + n_val) {
      s = Split::validation;
    }
    examples[order[k]].split = s;
  }
}

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 32);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        const std::string key = tmpl.substr(i + 1, close - i - 1);
        auto it = values.find(key);
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string render_statement(const QuirkyExample& ex, Character c) {
  return render_template(ex.statement, {{"character", to_string(c)}});
}

std::string default_template(const std::string& dataset_name) {
  const auto& table = template_table();
  auto it = table.find(dataset_name);
  if (it == table.end()) throw DataError("no template for dataset '" + dataset_name + "'");
  return it->second;
}

std::vector<nlohmann::json> to_jsonl_rows(const std::vector<QuirkyExample>& examples) {
  std::vector<nlohmann::json> rows;
  rows.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    for (Character c : {Character::alice, Character::bob}) {
      nlohmann::json j;
      j["id"] = ex.id + "-" + to_string(c);
      j["statement"] = render_statement(ex, c);
      j["character"] = to_string(c);
      j["alice_label"] = ex.alice_label;
      j["bob_label"] = ex.bob_label;
      j["difficulty"] = ex.difficulty;
      j["quartile"] = to_string(ex.quartile);
      j["split"] = to_string(ex.split);
      j["dataset"] = ex.dataset_name;
      rows.push_back(std::move(j));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<std::map<std::string, std::string>> read_csv(std::istream& in, std::vector<std::string>* header_out) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cell.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      row.push_back(std::move(cell));
      cell.clear();
      records.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      cell.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(cell));
    records.push_back(std::move(row));
  }
  // Drop blank lines.
  records.erase(std::remove_if(records.begin(), records.end(),
                               [](const auto& r) { return r.size() == 1 && r[0].empty(); }),
                records.end());
  std::vector<std::map<std::string, std::string>> out;
  if (records.empty()) return out;
  const std::vector<std::string> header = records.front();
  if (header_out) *header_out = header;
  for (std::size_t r = 1; r < records.size(); ++r) {
    std::map<std::string, std::string> m;
    for (std::size_t k = 0; k < records[r].size() && k < header.size(); ++k) m[header[k]] = records[r][k];
    // Short rows are kept; the missing fields surface as malformed later.
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::string> required_columns(const std::string& dataset) {
  if (dataset == "capitals") return {"city", "admin_name", "country"};
  if (dataset == "hemisphere") return {"city", "lng"};
  if (dataset == "population") return {"city", "country"};
  if (dataset == "sciq") return {"question", "support", "answer", "label", "difficulty"};
  if (dataset == "sentiment") return {"title", "review", "label", "difficulty"};
  if (dataset == "nli") return {"premise", "hypothesis", "label", "difficulty"};
  if (dataset == "authors") return {"author", "title", "true_author"};
  if (dataset == "squaring") return {"operand", "result"};
  if (is_arithmetic_dataset(dataset)) return {"op1", "op2", "result"};
  throw DataError("unknown dataset '" + dataset + "'");
}

namespace {

double record_difficulty(const std::string& dataset, const nlohmann::json& record) {
  if (has_field(record, "difficulty")) return get_number(record, "difficulty");
  if (city_datasets().count(dataset)) {
    const double pop = get_number(record, "population");
    if (!(pop > 0.0)) throw DataError("population must be positive");
    return -std::log(pop);
  }
  if (dataset == "authors") {
    const double count = get_number(record, "ratings_count");
    if (!(count > 0.0)) throw DataError("ratings_count must be positive");
    return -std::log(count);
  }
  if (dataset == "squaring") {
    return static_cast<double>(get_integer(record, has_field(record, "operand") ? "operand" : "op1"));
  }
  if (is_arithmetic_dataset(dataset)) {
    return static_cast<double>(std::min(get_integer(record, "op1"), get_integer(record, "op2")));
  }
  throw DataError("missing field 'difficulty'");
}

}  // namespace

std::vector<QuirkyExample> ingest_records(const std::filesystem::path& path, const std::string& dataset,
                                          const std::string& template_text, const LabelResources& resources,
                                          IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::vector<nlohmann::json> records;
  std::set<std::string> columns;
  const std::string ext = lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".json") {
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      try {
        records.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
        records.push_back(nullptr);
      }
    }
    for (const auto& r : records) {
      if (r.is_object()) {
        for (auto it = r.begin(); it != r.end(); ++it) columns.insert(it.key());
      }
    }
  } else {
    std::vector<std::string> header;
    for (auto& row : read_csv(in, &header)) {
      nlohmann::json j = nlohmann::json::object();
      for (auto& [k, v] : row) j[k] = v;
      records.push_back(std::move(j));
    }
    columns.insert(header.begin(), header.end());
  }

  for (const auto& col : required_columns(dataset)) {
    if (!columns.count(col)) throw DataError("missing field '" + col + "' in " + path.filename().string());
  }
  const bool has_difficulty = columns.count("difficulty") > 0;
  if (!has_difficulty) {
    if (city_datasets().count(dataset) && !columns.count("population")) {
      throw DataError("missing field 'population' (needed for difficulty)");
    }
    if (dataset == "authors" && !columns.count("ratings_count")) {
      throw DataError("missing field 'ratings_count' (needed for difficulty)");
    }
  }
  if (dataset == "capitals" && !columns.count("most_populous_in_admin")) {
    if (!columns.count("population")) throw DataError("missing field 'population' (needed for capitals labels)");
    // Most populous city per (country, admin region), computed table-wide.
    std::map<std::pair<std::string, std::string>, double> best;
    for (const auto& r : records) {
      try {
        const auto key = std::make_pair(get_string(r, "country"), get_string(r, "admin_name"));
        const double pop = get_number(r, "population");
        auto it = best.find(key);
        if (it == best.end() || pop > it->second) best[key] = pop;
      } catch (const DataError&) {
      }
    }
    for (auto& r : records) {
      try {
        const auto key = std::make_pair(get_string(r, "country"), get_string(r, "admin_name"));
        r["most_populous_in_admin"] = get_number(r, "population") >= best.at(key) ? 1 : 0;
      } catch (const std::exception&) {
      }
    }
  }

  std::vector<QuirkyExample> out;
  std::size_t malformed = 0;
  char id_buf[64];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    try {
      if (!r.is_object()) throw DataError("not a JSON object");
      const QuirkyLabels labels = apply_quirky_label(dataset, r, resources);
      const double difficulty = record_difficulty(dataset, r);
      if (!std::isfinite(difficulty)) throw DataError("non-finite difficulty");
      std::map<std::string, std::string> values;
      for (auto it = r.begin(); it != r.end(); ++it) {
        if (it.key() == "character") continue;
        values[it.key()] = it->is_string() ? it->get<std::string>() : it->dump();
      }
      QuirkyExample ex;
      std::snprintf(id_buf, sizeof(id_buf), "%s-%06zu", dataset.c_str(), i);
      ex.id = id_buf;
      ex.dataset_name = dataset;
      ex.record = r;
      ex.alice_label = labels.alice_label;
      ex.bob_label = labels.bob_label;
      ex.difficulty = difficulty;
      ex.statement = render_template(template_text, values);
      out.push_back(std::move(ex));
    } catch (const DataError&) {
      ++malformed;
    }
  }
  if (report) *report = {records.size(), malformed};
  if (!records.empty() && static_cast<double>(malformed) > 0.1 * static_cast<double>(records.size())) {
    throw DataError("aborting ingest: " + std::to_string(malformed) + " of " + std::to_string(records.size()) +
                    " rows malformed (limit 10%)");
  }
  return out;
}

}  // namespace quirky
