#include "quirky/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "quirky/anomaly.hpp"
#include "quirky/error.hpp"
#include "quirky/evaluation.hpp"
#include "quirky/parallel.hpp"
#include "quirky/probes.hpp"
#include "quirky/quirky_data.hpp"
#include "quirky/rng.hpp"
#include "quirky/world.hpp"

#ifndef QUIRKY_GIT_DESCRIBE
#define QUIRKY_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;

namespace quirky {

const char* build_describe() { return QUIRKY_GIT_DESCRIBE; }

namespace {

fs::path data_root() {
  const char* env = std::getenv("QUIRKY_DATA_ROOT");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? data_root() / fallback : fs::path(given);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Reproducibility record: resolved options, seed and source version.
void write_run_record(const fs::path& path, const std::string& command, const CLI::App& sub, std::uint64_t seed) {
  nlohmann::json options = nlohmann::json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string key = opt->get_single_name();
    if (key.empty() || key == "help") continue;
    const auto& results = opt->results();
    if (results.empty()) {
      options[key] = nullptr;
    } else if (results.size() == 1) {
      options[key] = results.front();
    } else {
      options[key] = results;
    }
  }
  nlohmann::json config_file = nullptr;
  if (const CLI::App* parent = sub.get_parent()) {
    if (const CLI::Option* c = parent->get_config_ptr(); c && c->count() > 0) config_file = c->results().front();
  }
  nlohmann::json record = {{"command", command},
                           {"config_file", config_file},
                           {"config", options},
                           {"seed", seed},
                           {"git_describe", build_describe()}};
  write_json(path, record);
}

template <typename T>
std::optional<std::set<T>> parse_set(const std::string& list, T (*parse)(const std::string&)) {
  if (list.empty() || list == "*" || list == "all") return std::nullopt;
  std::set<T> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(parse(item));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DataError("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string dataset;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  std::string input;
  std::string template_text;
  std::string word_list;
  std::string mixture;
  std::string splits = "0.5,0.25,0.25";
  std::string out;
};

void run_gen_data(const GenDataArgs& a, const CLI::App& sub) {
  std::vector<QuirkyExample> examples;
  if (is_arithmetic_dataset(a.dataset)) {
    if (!a.input.empty()) throw DataError("arithmetic datasets are generated, not ingested");
    ArithmeticSpec spec = ArithmeticSpec::for_dataset(a.dataset);
    if (!a.template_text.empty()) spec.template_text = a.template_text;
    ArithmeticOptions opts;
    if (!a.mixture.empty()) {
      const auto w = parse_doubles(a.mixture);
      if (w.size() != 4) throw DataError("--mixture needs four weights: true,quirky,distractor-true,distractor-quirky");
      opts.mixture = {w[0], w[1], w[2], w[3]};
    }
    ArithmeticStats stats;
    examples = gen_arithmetic(spec, a.n, a.seed, opts, &stats);
    if (stats.skipped) std::cerr << "skipped " << stats.skipped << " draws with no valid distractor\n";
  } else {
    if (a.input.empty()) throw DataError("dataset '" + a.dataset + "' needs --input");
    LabelResources res;
    if (!a.word_list.empty()) res.positive_words = LabelResources::load_word_list(a.word_list);
    IngestReport rep;
    examples = ingest_records(a.input, a.dataset, a.template_text.empty() ? default_template(a.dataset) : a.template_text,
                              res, &rep);
    std::cerr << "ingested " << examples.size() << " of " << rep.rows << " rows (" << rep.malformed
              << " malformed skipped)\n";
  }
  const QuartileAssignment qa = assign_difficulty_quartiles(examples);
  if (qa.degenerate) std::cerr << "warning: degenerate difficulty; every example tagged mid\n";
  const auto f = parse_doubles(a.splits);
  if (f.size() != 3) throw DataError("--splits needs three fractions: train,validation,test");
  assign_splits(examples, {f[0], f[1], f[2]}, a.seed);

  const fs::path out = or_default(a.out, a.dataset + ".jsonl");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream file(out, std::ios::binary);
  if (!file) throw Error("cannot write " + out.string());
  std::size_t easy = 0, hard = 0;
  for (const auto& ex : examples) {
    easy += ex.quartile == Quartile::easy;
    hard += ex.quartile == Quartile::hard;
  }
  for (const auto& row : to_jsonl_rows(examples)) file << row.dump() << "\n";
  file.close();
  fs::path record = out;
  record += ".run.json";
  write_run_record(record, "gen-data", sub, a.seed);
  std::cout << "wrote " << examples.size() * 2 << " rows to " << out.string() << " (easy " << easy << ", hard "
            << hard << " of " << examples.size() << "; q25 " << qa.thresholds.q25 << ", q75 " << qa.thresholds.q75
            << ")\n";
}

// ---------------------------------------------------------------------------
// gen-world
// ---------------------------------------------------------------------------

struct GenWorldArgs {
  std::size_t n = 20000;
  std::uint64_t seed = 0;
  std::string world_config;
  std::string out;
};

void run_gen_world(const GenWorldArgs& a, const CLI::App& sub) {
  const WorldConfig config = a.world_config.empty() ? WorldConfig{} : world_config_from_json(read_json(a.world_config));
  const WorldSample sample = gen_world(config, a.n, a.seed);
  const fs::path out = or_default(a.out, "world");
  write_store(sample.store, out);
  write_json(out / "world.json", to_json(config));
  write_run_record(out / "run.json", "gen-world", sub, a.seed);
  std::cout << "wrote world store (n " << a.n << ", d " << config.d << ", L " << config.layer_count << ") to "
            << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// train-probes
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string store;
  std::string methods = "all";
  std::string layers;
  std::string characters = "Alice";
  std::string quartiles = "easy";
  std::string splits = "train";
  std::string labels = "alice";
  std::size_t max_n = 4000;
  std::string sign_mode = "platt";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

Filter filter_from(const std::string& characters, const std::string& quartiles, const std::string& splits) {
  Filter f;
  f.characters = parse_set<Character>(characters, &character_from_string);
  f.quartiles = parse_set<Quartile>(quartiles, &quartile_from_string);
  f.splits = parse_set<Split>(splits, &split_from_string);
  return f;
}

std::vector<int> parse_layers(const std::string& list, int layer_count) {
  std::vector<int> out;
  if (list.empty() || list == "all") {
    for (int l = 0; l < layer_count; ++l) out.push_back(l);
    return out;
  }
  for (const auto& item : split_list(list)) {
    int l = 0;
    try {
      l = std::stoi(item);
    } catch (const std::exception&) {
      throw DataError("bad layer '" + item + "'");
    }
    if (l < 1 || l > layer_count) throw DataError("layer " + item + " outside 1.." + std::to_string(layer_count));
    out.push_back(l - 1);
  }
  return out;
}

void run_train_probes(const TrainArgs& a, const CLI::App& sub) {
  const ActivationStore store = read_store(a.store);
  Filter f = filter_from(a.characters, a.quartiles, a.splits);
  f.max_n = a.max_n;
  f.seed = mix_seed(a.seed, 1);
  const StoreView view = select(store, f);
  const LabelSet labels = label_set_from_string(a.labels);
  const SignMode mode = sign_mode_from_string(a.sign_mode);
  const auto methods = parse_methods(a.methods);
  const auto layers = parse_layers(a.layers, store.layer_count);
  const fs::path out = or_default(a.out, "probes");
  fs::create_directories(out);

  std::vector<std::pair<Method, int>> jobs;
  for (Method m : methods) {
    for (int l : layers) jobs.emplace_back(m, l);
  }
  std::vector<nlohmann::json> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), a.jobs, [&](std::size_t k) {
    const auto [m, l] = jobs[k];
    try {
      const ProbeData data = probe_data(view, l, m);
      ProbeOptions popts;
      popts.seed = mix_seed(a.seed, 1000 + k);
      Probe p = train_probe(m, data, view.labels(labels), popts);
      p.layer = l;
      p = resolve_sign(p, data, view.labels(labels), mode, f.describe());
      results[k] = to_json(p);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });
  std::size_t ok = 0;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto [m, l] = jobs[k];
    if (!errors[k].empty()) {
      std::cerr << to_string(m) << " layer " << l + 1 << ": " << errors[k] << "\n";
      continue;
    }
    write_json(out / ("probe_" + std::string(to_string(m)) + "_L" + std::to_string(l + 1) + ".json"), results[k]);
    ++ok;
  }
  write_run_record(out / "run.json", "train-probes", sub, a.seed);
  std::cout << "trained " << ok << " of " << jobs.size() << " probes on " << view.size() << " examples ("
            << f.describe() << ")\n";
  if (ok == 0) throw DataError("no probe could be trained");
}

// ---------------------------------------------------------------------------
// transfer / report
// ---------------------------------------------------------------------------

struct TransferArgs {
  std::vector<std::string> stores;
  std::string experiments = "AE-BH";
  std::string methods = "all";
  std::uint64_t seed = 0;
  std::size_t max_train = 4000;
  std::size_t max_eval = 1000;
  std::size_t random_draws = 0;
  std::string sign_mode = "platt";
  std::string format = "csv";
  int jobs = 1;
  std::string out;
};

void run_transfer_cmd(const TransferArgs& a, const CLI::App& sub) {
  const auto methods = parse_methods(a.methods);
  const fs::path out = or_default(a.out, "transfer");
  fs::create_directories(out);
  std::vector<TransferReport> reports;
  for (const auto& store_path : a.stores) {
    const ActivationStore store = read_store(store_path);
    for (const auto& name : split_list(a.experiments)) {
      TransferSpec spec = transfer_preset(name);
      spec.max_train = a.max_train;
      spec.max_eval = a.max_eval;
      std::vector<Method> use;
      for (Method m : methods) {
        if (!spec.unsupervised_only || is_unsupervised(m)) use.push_back(m);
      }
      if (use.empty()) {
        std::cerr << spec.name << ": no unsupervised method requested; skipped\n";
        continue;
      }
      TransferOptions opts;
      opts.seed = a.seed;
      opts.jobs = a.jobs;
      opts.sign_mode = sign_mode_from_string(a.sign_mode);
      opts.random_draws = a.random_draws;
      TransferReport r = run_transfer(store, spec, use, opts);
      write_json(out / ("transfer_" + r.dataset + "_" + r.experiment + ".json"), to_json(r));
      for (const auto& s : r.summaries) {
        std::cout << r.dataset << " " << r.experiment << " " << to_string(s.method) << ": EIL " << s.eil
                  << ", transfer AUROC " << (s.auroc_transfer ? fixed(*s.auroc_transfer, 4) : "n/a") << ", PGR "
                  << (s.pgr ? fixed(*s.pgr, 4) : "n/a") << "\n";
      }
      reports.push_back(std::move(r));
    }
  }
  if (reports.empty()) throw DataError("no experiment produced a report");
  emit_report(reports, report_format_from_string(a.format), out);
  write_run_record(out / "run.json", "transfer", sub, a.seed);
}

struct ReportArgs {
  std::string in;
  std::string format = "markdown";
  std::string out;
};

void run_report(const ReportArgs& a, const CLI::App& sub) {
  if (!fs::is_directory(a.in)) throw DataError("not a directory: " + a.in);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(a.in)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("transfer_", 0) == 0 && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no transfer_*.json reports under " + a.in);
  std::vector<TransferReport> reports;
  for (const auto& f : files) reports.push_back(transfer_report_from_json(read_json(f)));
  const fs::path out = a.out.empty() ? fs::path(a.in) : fs::path(a.out);
  const auto format = report_format_from_string(a.format);
  for (const auto& p : emit_report(reports, format, out)) std::cout << "wrote " << p.string() << "\n";
  write_run_record(out / "report.run.json", "report", sub, 0);
}

// ---------------------------------------------------------------------------
// layer-select
// ---------------------------------------------------------------------------

struct LayerArgs {
  std::string store;
  std::string aurocs;
  std::string method = "logr";
  std::string experiment = "AE-BH";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

void run_layer_select(const LayerArgs& a, const CLI::App& sub) {
  std::vector<double> by_layer;
  if (!a.aurocs.empty()) {
    by_layer = parse_doubles(a.aurocs);
  } else {
    if (a.store.empty()) throw DataError("layer-select needs --store or --aurocs");
    const ActivationStore store = read_store(a.store);
    TransferOptions opts;
    opts.seed = a.seed;
    opts.jobs = a.jobs;
    const TransferReport r = run_transfer(store, transfer_preset(a.experiment), {method_from_string(a.method)}, opts);
    for (const auto& c : r.cells) by_layer.push_back(c.auroc_id.value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  const int eil = earliest_informative_layer(by_layer);
  std::ostringstream csv;
  csv << "layer,auroc_id,informative\n";
  double best = -1.0;
  for (double v : by_layer) {
    if (std::isfinite(v)) best = std::max(best, v);
  }
  for (std::size_t l = 0; l < by_layer.size(); ++l) {
    const bool informative = std::isfinite(by_layer[l]) && by_layer[l] - 0.5 >= 0.95 * (best - 0.5);
    csv << l + 1 << "," << (std::isfinite(by_layer[l]) ? fixed(by_layer[l]) : "") << "," << (informative ? 1 : 0)
        << "\n";
  }
  if (!a.out.empty() || !a.store.empty()) {
    const fs::path out = or_default(a.out, "layer_select");
    fs::create_directories(out);
    std::ofstream(out / "layers.csv", std::ios::binary) << csv.str();
    write_run_record(out / "run.json", "layer-select", sub, a.seed);
  }
  std::cout << csv.str() << "earliest informative layer: " << eil << "\n";
}

// ---------------------------------------------------------------------------
// anomaly
// ---------------------------------------------------------------------------

struct AnomalyArgs {
  std::string store;
  std::string method = "logr";
  std::string variant = "full";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

void run_anomaly(const AnomalyArgs& a, const CLI::App& sub) {
  const ActivationStore store = read_store(a.store);
  AnomalyOptions opts;
  opts.seed = a.seed;
  opts.jobs = a.jobs;
  const AnomalyDetector det =
      fit_detector(store, method_from_string(a.method), mahalanobis_variant_from_string(a.variant), opts);
  const AnomalyEval ev = eval_anomaly(det, store);
  const fs::path out = or_default(a.out, "anomaly");
  fs::create_directories(out);
  write_json(out / "detector.json", to_json(det));

  std::ofstream scores(out / "scores.csv", std::ios::binary);
  scores << "id,character,score\n";
  for (Character c : {Character::bob, Character::alice}) {
    Filter f;
    f.characters = std::set<Character>{c};
    f.quartiles = std::set<Quartile>{Quartile::hard};
    f.splits = std::set<Split>{Split::test};
    const AnomalyScores s = score(det, store, f);
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      scores << s.ids[i] << "," << to_string(c) << "," << fixed(s.scores[static_cast<Eigen::Index>(i)]) << "\n";
    }
  }
  scores.close();
  write_json(out / "anomaly.json", {{"dataset", store.dataset_name},
                                    {"method", a.method},
                                    {"variant", a.variant},
                                    {"auroc", ev.auroc},
                                    {"n_bob_hard", ev.n_bob_hard},
                                    {"n_alice_hard", ev.n_alice_hard}});
  write_run_record(out / "run.json", "anomaly", sub, a.seed);
  std::cout << store.dataset_name << " " << a.method << " (" << a.variant << "): BH vs AH AUROC " << fixed(ev.auroc, 4)
            << " (" << ev.n_bob_hard << " BH, " << ev.n_alice_hard << " AH)\n";
}

// ---------------------------------------------------------------------------
// intervene
// ---------------------------------------------------------------------------

struct InterveneArgs {
  std::string world;
  int layer = 0;
  std::size_t examples = 300;
  std::string probe;
  std::uint64_t seed = 0;
  std::string out;
};

std::uint64_t world_index(const std::string& id) {
  const auto dash = id.rfind('-');
  try {
    return std::stoull(id.substr(dash + 1));
  } catch (const std::exception&) {
    throw DataError("not a world example id: " + id);
  }
}

void run_intervene(const InterveneArgs& a, const CLI::App& sub) {
  const ActivationStore store = read_store(a.world);
  if (!store.notes.contains("world") || !store.notes.contains("seed")) {
    throw DataError("interventions need a store written by gen-world");
  }
  const WorldConfig config = world_config_from_json(store.notes["world"]);
  const std::uint64_t world_seed = store.notes["seed"].get<std::uint64_t>();
  const WorldDirections dirs = make_directions(config);
  const int layer = a.layer == 0 ? config.layer_count : a.layer;
  if (layer < 1 || layer > config.layer_count) throw DataError("--layer outside 1.." + std::to_string(config.layer_count));

  // Probe direction and centre come from the probe's training set.
  Filter train_f;
  train_f.characters = std::set<Character>{Character::alice};
  train_f.splits = std::set<Split>{Split::train};
  train_f.max_n = 4000;
  train_f.seed = mix_seed(a.seed, 1);
  const StoreView train = select(store, train_f);
  const Matrix X = train.matrix(layer - 1, Position::final_prompt);
  const Vector center = X.colwise().mean().transpose();
  Vector w;
  std::string source;
  if (a.probe.empty()) {
    w = train_diff_means(X, train.labels(LabelSet::alice)).w;
    source = "diff_means";
  } else {
    const Probe p = probe_from_json(read_json(a.probe));
    if (p.w.size() != config.d) throw DataError("probe width does not match the world");
    w = p.w;
    source = a.probe;
  }
  w.normalize();
  const Vector r = train_random(config.d, mix_seed(a.seed, 7)).w;

  Filter eval_f;
  eval_f.splits = std::set<Split>{Split::test};
  eval_f.max_n = a.examples;
  eval_f.seed = mix_seed(a.seed, 3);
  const StoreView eval = select(store, eval_f);
  std::size_t flips_probe = 0, flips_random = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const WorldExample ex = simulate_world_example(config, dirs, world_seed, world_index(eval.meta(i).example_id));
    const bool before = ex.lm_output_prob > 0.5;
    flips_probe += (intervene_forward(config, dirs, ex, layer, w, center) > 0.5) != before;
    flips_random += (intervene_forward(config, dirs, ex, layer, r, center) > 0.5) != before;
  }
  const double n = static_cast<double>(eval.size());
  const fs::path out = or_default(a.out, "intervene");
  write_json(out / "intervene.json", {{"layer", layer},
                                      {"examples", eval.size()},
                                      {"direction", source},
                                      {"flip_rate_probe", flips_probe / n},
                                      {"flip_rate_random", flips_random / n}});
  write_run_record(out / "run.json", "intervene", sub, a.seed);
  std::cout << "layer " << layer << ", " << eval.size() << " examples: flip rate " << fixed(flips_probe / n, 4)
            << " along " << source << ", " << fixed(flips_random / n, 4) << " along a random direction\n";
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Quirky-model probing toolkit: data generation, probes, transfer, anomaly detection", "quirky"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags win");
  app.set_version_flag("--version", std::string(build_describe()));
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* s_gd = app.add_subcommand("gen-data", "Generate or ingest a quirky dataset as JSONL");
  s_gd->add_option("--dataset", gd.dataset, "Dataset name (addition, subtraction, multiplication, modularaddition, "
                                            "squaring, capitals, hemisphere, population, sciq, sentiment, nli, authors)")
      ->required();
  s_gd->add_option("--n", gd.n, "Examples to generate (arithmetic only)")->capture_default_str();
  s_gd->add_option("--seed", gd.seed, "Random seed")->required();
  s_gd->add_option("--input", gd.input, "CSV or JSONL records to ingest (non-arithmetic datasets)");
  s_gd->add_option("--template", gd.template_text, "Statement template overriding the dataset default");
  s_gd->add_option("--word-list", gd.word_list, "Positive word list for sentiment labels");
  s_gd->add_option("--mixture", gd.mixture, "Result-kind weights: true,quirky,distractor-true,distractor-quirky");
  s_gd->add_option("--splits", gd.splits, "train,validation,test fractions")->capture_default_str();
  s_gd->add_option("--out", gd.out, "Output JSONL (default $QUIRKY_DATA_ROOT/<dataset>.jsonl)");

  GenWorldArgs gw;
  auto* s_gw = app.add_subcommand("gen-world", "Simulate the planted-direction world into an activation store");
  s_gw->add_option("--n", gw.n, "Examples")->capture_default_str();
  s_gw->add_option("--seed", gw.seed, "Random seed")->required();
  s_gw->add_option("--world-config", gw.world_config, "WorldConfig JSON (defaults when omitted)");
  s_gw->add_option("--out", gw.out, "Store directory (default $QUIRKY_DATA_ROOT/world)");

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train-probes", "Train and sign-resolve probes on one store slice");
  s_tr->add_option("--store", tr.store, "Activation store directory")->required();
  s_tr->add_option("--methods", tr.methods, "Comma list of methods or 'all'")->capture_default_str();
  s_tr->add_option("--layers", tr.layers, "Comma list of 1-indexed layers (default all)");
  s_tr->add_option("--characters", tr.characters, "Alice,Bob or all")->capture_default_str();
  s_tr->add_option("--quartiles", tr.quartiles, "easy,mid,hard or all")->capture_default_str();
  s_tr->add_option("--splits", tr.splits, "train,validation,test or all")->capture_default_str();
  s_tr->add_option("--labels", tr.labels, "Label set: alice or bob")->capture_default_str();
  s_tr->add_option("--max-n", tr.max_n, "Subsample size")->capture_default_str();
  s_tr->add_option("--sign-mode", tr.sign_mode, "platt or auroc")->capture_default_str();
  s_tr->add_option("--seed", tr.seed, "Random seed")->required();
  s_tr->add_option("--jobs", tr.jobs, "Worker threads")->capture_default_str();
  s_tr->add_option("--out", tr.out, "Output directory for probe JSON files");

  TransferArgs tf;
  auto* s_tf = app.add_subcommand("transfer", "Run transfer experiments and write tables");
  s_tf->add_option("--store", tf.stores, "Activation store directory (repeat for several datasets)")->required();
  s_tf->add_option("--experiments", tf.experiments, "Comma list: A-B, B-A, AE-AH, AE-BH, all-BH")
      ->capture_default_str();
  s_tf->add_option("--methods", tf.methods, "Comma list of methods or 'all'")->capture_default_str();
  s_tf->add_option("--seed", tf.seed, "Random seed")->required();
  s_tf->add_option("--max-train", tf.max_train, "Training examples per experiment")->capture_default_str();
  s_tf->add_option("--max-eval", tf.max_eval, "Evaluation examples per experiment")->capture_default_str();
  s_tf->add_option("--random-draws", tf.random_draws, "Random-probe baseline draws at the EIL (0 skips)")
      ->capture_default_str();
  s_tf->add_option("--sign-mode", tf.sign_mode, "platt or auroc")->capture_default_str();
  s_tf->add_option("--format", tf.format, "Table format: csv or markdown")->capture_default_str();
  s_tf->add_option("--jobs", tf.jobs, "Worker threads")->capture_default_str();
  s_tf->add_option("--out", tf.out, "Output directory (default $QUIRKY_DATA_ROOT/transfer)");

  LayerArgs ls;
  auto* s_ls = app.add_subcommand("layer-select", "Earliest informative layer from a store or an AUROC list");
  s_ls->add_option("--store", ls.store, "Activation store directory");
  s_ls->add_option("--aurocs", ls.aurocs, "Comma list of in-distribution AUROCs by layer");
  s_ls->add_option("--method", ls.method, "Probing method")->capture_default_str();
  s_ls->add_option("--experiment", ls.experiment, "Experiment whose training slice defines the ID AUROC")
      ->capture_default_str();
  s_ls->add_option("--seed", ls.seed, "Random seed")->capture_default_str();
  s_ls->add_option("--jobs", ls.jobs, "Worker threads")->capture_default_str();
  s_ls->add_option("--out", ls.out, "Output directory");

  AnomalyArgs an;
  auto* s_an = app.add_subcommand("anomaly", "Fit the Alice-easy detector and score Bob-hard against Alice-hard");
  s_an->add_option("--store", an.store, "Activation store directory")->required();
  s_an->add_option("--method", an.method, "Probing method for the per-layer features")->capture_default_str();
  s_an->add_option("--variant", an.variant, "full or diag_subtracted")->capture_default_str();
  s_an->add_option("--seed", an.seed, "Random seed")->required();
  s_an->add_option("--jobs", an.jobs, "Worker threads")->capture_default_str();
  s_an->add_option("--out", an.out, "Output directory (default $QUIRKY_DATA_ROOT/anomaly)");

  InterveneArgs iv;
  auto* s_iv = app.add_subcommand("intervene", "Householder interventions on a synthetic world store");
  s_iv->add_option("--world", iv.world, "Store written by gen-world")->required();
  s_iv->add_option("--layer", iv.layer, "1-indexed layer (default: last)");
  s_iv->add_option("--examples", iv.examples, "Test examples to intervene on")->capture_default_str();
  s_iv->add_option("--probe", iv.probe, "Probe JSON whose direction to reflect (default: diff-in-means)");
  s_iv->add_option("--seed", iv.seed, "Random seed")->required();
  s_iv->add_option("--out", iv.out, "Output directory (default $QUIRKY_DATA_ROOT/intervene)");

  ReportArgs rp;
  auto* s_rp = app.add_subcommand("report", "Rebuild tables from saved transfer reports");
  s_rp->add_option("--in", rp.in, "Directory searched for transfer_*.json")->required();
  s_rp->add_option("--format", rp.format, "csv or markdown")->capture_default_str();
  s_rp->add_option("--out", rp.out, "Output directory (default: --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s_gd->parsed()) run_gen_data(gd, *s_gd);
    if (s_gw->parsed()) run_gen_world(gw, *s_gw);
    if (s_tr->parsed()) run_train_probes(tr, *s_tr);
    if (s_tf->parsed()) run_transfer_cmd(tf, *s_tf);
    if (s_ls->parsed()) run_layer_select(ls, *s_ls);
    if (s_an->parsed()) run_anomaly(an, *s_an);
    if (s_iv->parsed()) run_intervene(iv, *s_iv);
    if (s_rp->parsed()) run_report(rp, *s_rp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int cli_dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("quirky");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace quirky
