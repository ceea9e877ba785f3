#include "quirky/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "quirky/error.hpp"
#include "quirky/parallel.hpp"
#include "quirky/rng.hpp"

namespace quirky {

namespace {

Filter make_filter(std::optional<Character> c, std::optional<Quartile> q, Split split) {
  Filter f;
  if (c) f.characters = std::set<Character>{*c};
  if (q) f.quartiles = std::set<Quartile>{*q};
  f.splits = std::set<Split>{split};
  return f;
}

std::string canonical_experiment(std::string name) {
  for (const std::string arrow : {"→", "->", "_to_"}) {
    const auto pos = name.find(arrow);
    if (pos != std::string::npos && pos > 0) {
      name = name.substr(0, pos) + "-" + name.substr(pos + arrow.size());
      break;
    }
  }
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "a-b") return "A-B";
  if (lower == "b-a") return "B-A";
  if (lower == "ae-ah") return "AE-AH";
  if (lower == "ae-bh") return "AE-BH";
  if (lower == "all-bh") return "all-BH";
  throw DataError("unknown transfer experiment '" + name + "'");
}

}  // namespace

TransferSpec transfer_preset(const std::string& raw_name) {
  const std::string name = canonical_experiment(raw_name);
  TransferSpec s;
  s.name = name;
  if (name == "A-B") {
    s.train_filter = make_filter(Character::alice, std::nullopt, Split::train);
    s.eval_filter = make_filter(Character::bob, std::nullopt, Split::test);
    s.disagreement_only = true;
  } else if (name == "B-A") {
    s.train_filter = make_filter(Character::bob, std::nullopt, Split::train);
    s.eval_filter = make_filter(Character::alice, std::nullopt, Split::test);
    s.train_labels = LabelSet::bob;
    s.eval_labels = LabelSet::bob;
    s.disagreement_only = true;
  } else if (name == "AE-AH") {
    s.train_filter = make_filter(Character::alice, Quartile::easy, Split::train);
    s.eval_filter = make_filter(Character::alice, Quartile::hard, Split::test);
  } else if (name == "AE-BH") {
    s.train_filter = make_filter(Character::alice, Quartile::easy, Split::train);
    s.eval_filter = make_filter(Character::bob, Quartile::hard, Split::test);
  } else {
    s.train_filter = make_filter(std::nullopt, std::nullopt, Split::train);
    s.eval_filter = make_filter(Character::bob, Quartile::hard, Split::test);
    s.unsupervised_only = true;
    s.oracle_sign = true;
  }
  return s;
}

std::vector<std::string> transfer_preset_names() { return {"A-B", "B-A", "AE-AH", "AE-BH", "all-BH"}; }

const TransferCell* TransferReport::cell(Method m, int layer) const {
  for (const auto& c : cells) {
    if (c.method == m && c.layer == layer) return &c;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

nlohmann::json to_json(const TransferReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["dataset"] = r.dataset;
  j["seed"] = r.seed;
  j["n_train"] = r.n_train;
  j["n_eval"] = r.n_eval;
  j["floor_auroc"] = opt(r.floor_auroc);
  j["ceil_auroc"] = opt(r.ceil_auroc);
  j["floor_error"] = r.floor_error;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"method", to_string(c.method)},
                     {"layer", c.layer + 1},
                     {"auroc_id", opt(c.auroc_id)},
                     {"auroc_transfer", opt(c.auroc_transfer)},
                     {"error", c.error}});
  }
  j["cells"] = cells;
  nlohmann::json sums = nlohmann::json::array();
  for (const auto& s : r.summaries) {
    sums.push_back({{"method", to_string(s.method)},
                    {"eil", s.eil},
                    {"auroc_id", opt(s.auroc_id)},
                    {"auroc_transfer", opt(s.auroc_transfer)},
                    {"pgr", opt(s.pgr)},
                    {"error", s.error}});
  }
  j["summaries"] = sums;
  if (r.random) {
    j["random_baseline"] = {{"layer", r.random_layer},
                            {"draws", r.random->draws},
                            {"percentiles", r.random->percentiles},
                            {"values", r.random->values}};
  }
  return j;
}

TransferReport transfer_report_from_json(const nlohmann::json& j) {
  TransferReport r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.n_train = j.value("n_train", std::size_t{0});
    r.n_eval = j.value("n_eval", std::size_t{0});
    r.floor_auroc = opt_from(j, "floor_auroc");
    r.ceil_auroc = opt_from(j, "ceil_auroc");
    r.floor_error = j.value("floor_error", std::string{});
    for (const auto& c : j.at("cells")) {
      TransferCell cell;
      cell.method = method_from_string(c.at("method").get<std::string>());
      cell.layer = c.at("layer").get<int>() - 1;
      cell.auroc_id = opt_from(c, "auroc_id");
      cell.auroc_transfer = opt_from(c, "auroc_transfer");
      cell.error = c.value("error", std::string{});
      r.cells.push_back(cell);
    }
    for (const auto& s : j.at("summaries")) {
      MethodSummary m;
      m.method = method_from_string(s.at("method").get<std::string>());
      m.eil = s.at("eil").get<int>();
      m.auroc_id = opt_from(s, "auroc_id");
      m.auroc_transfer = opt_from(s, "auroc_transfer");
      m.pgr = opt_from(s, "pgr");
      m.error = s.value("error", std::string{});
      r.summaries.push_back(m);
    }
    if (j.contains("random_baseline")) {
      const auto& rb = j["random_baseline"];
      RandomBaseline b;
      b.draws = rb.at("draws").get<std::size_t>();
      b.percentiles = rb.at("percentiles").get<std::vector<double>>();
      b.values = rb.at("values").get<std::vector<double>>();
      r.random = b;
      r.random_layer = rb.value("layer", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed transfer report: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Layer selection and PGR
// ---------------------------------------------------------------------------

int earliest_informative_layer(const std::vector<double>& auroc_by_layer) {
  const int L = static_cast<int>(auroc_by_layer.size());
  if (L < 1) throw DataError("earliest informative layer needs at least one layer");
  double best = -std::numeric_limits<double>::infinity();
  for (double a : auroc_by_layer) {
    if (std::isfinite(a)) best = std::max(best, a);
  }
  if (std::isfinite(best)) {
    const double threshold = 0.95 * (best - 0.5);
    for (int l = 0; l < L; ++l) {
      const double a = auroc_by_layer[static_cast<std::size_t>(l)];
      if (std::isfinite(a) && a - 0.5 >= threshold) return l + 1;
    }
  }
  return std::max(1, L / 2);
}

double pgr(double auroc_value, double floor, double ceil, double epsilon) {
  if (!(std::abs(ceil - floor) > epsilon)) {
    std::ostringstream msg;
    msg << "uninformative gap (floor " << floor << ", ceiling " << ceil << ")";
    throw DataError(msg.str());
  }
  return (auroc_value - floor) / (ceil - floor);
}

std::vector<PgrGroup> aggregate_pgr(const std::vector<PgrCell>& cells, double epsilon) {
  std::vector<PgrGroup> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& c : cells) {
    auto it = index.find(c.group);
    if (it == index.end()) {
      it = index.emplace(c.group, groups.size()).first;
      PgrGroup g;
      g.group = c.group;
      groups.push_back(g);
    }
    PgrGroup& g = groups[it->second];
    if (c.failed || !std::isfinite(c.auroc) || !std::isfinite(c.floor) || !std::isfinite(c.ceil)) {
      ++g.excluded;
      continue;
    }
    g.auroc += c.auroc;
    g.floor += c.floor;
    g.ceil += c.ceil;
    ++g.cells;
  }
  for (auto& g : groups) {
    if (g.cells == 0) {
      g.error = "no usable cells";
      continue;
    }
    const double n = static_cast<double>(g.cells);
    g.auroc /= n;
    g.floor /= n;
    g.ceil /= n;
    try {
      g.pgr = pgr(g.auroc, g.floor, g.ceil, epsilon);
    } catch (const DataError& e) {
      g.error = e.what();
    }
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Transfer experiments
// ---------------------------------------------------------------------------

namespace {

bool same_filter(const Filter& a, const Filter& b) { return a.describe() == b.describe(); }

StoreView restrict_disagreement(const StoreView& view) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (view.meta(i).alice_label != view.meta(i).bob_label) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("empty disagreement set");
  return view.subset(keep);
}

std::string error_text(const std::exception& e) { return e.what(); }

}  // namespace

TransferReport run_transfer(const ActivationStore& store, const TransferSpec& spec, const std::vector<Method>& methods,
                            const TransferOptions& options) {
  store.validate();
  if (methods.empty()) throw DataError("no probing methods given");
  const std::uint64_t seed = options.seed;
  TransferReport report;
  report.experiment = spec.name;
  report.dataset = store.dataset_name;
  report.seed = seed;

  Filter train_filter = spec.train_filter;
  train_filter.max_n = spec.max_train;
  train_filter.seed = mix_seed(seed, 1);
  const StoreView train_all = select(store, train_filter);

  // Holdout: the last 20% of a seeded shuffle of the training selection.
  std::vector<std::size_t> order(train_all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 2);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_hold = order.size() / 5;
  if (n_hold == 0 || n_hold == order.size()) throw DataError("training slice too small for a holdout");
  std::vector<std::size_t> fit_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> hold_idx(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());
  const StoreView fit_view = train_all.subset(fit_idx);
  const StoreView hold_view = train_all.subset(hold_idx);
  const LabelSet sign_labels = spec.oracle_sign ? LabelSet::alice : spec.train_labels;

  Filter eval_filter = spec.eval_filter;
  eval_filter.max_n = spec.max_eval;
  eval_filter.seed = mix_seed(seed, 3);
  const bool self_transfer = same_filter(spec.train_filter, spec.eval_filter) && spec.train_labels == spec.eval_labels;
  StoreView eval_view = self_transfer ? hold_view : select(store, eval_filter);
  if (spec.disagreement_only) eval_view = restrict_disagreement(eval_view);
  report.n_train = fit_view.size();
  report.n_eval = eval_view.size();

  const int L = store.layer_count;
  report.cells.resize(methods.size() * static_cast<std::size_t>(L));
  parallel_for(report.cells.size(), options.jobs, [&](std::size_t k) {
    TransferCell& cell = report.cells[k];
    cell.method = methods[k / static_cast<std::size_t>(L)];
    cell.layer = static_cast<int>(k % static_cast<std::size_t>(L));
    if (spec.unsupervised_only && !is_unsupervised(cell.method)) {
      cell.error = "supervised method excluded from " + spec.name;
      return;
    }
    try {
      const ProbeData fit_data = probe_data(fit_view, cell.layer, cell.method);
      ProbeOptions popts = options.probe;
      popts.seed = mix_seed(seed, 1000 + k);
      Probe probe = train_probe(cell.method, fit_data, fit_view.labels(spec.train_labels), popts);
      probe.layer = cell.layer;
      probe = resolve_sign(probe, fit_data, fit_view.labels(sign_labels), options.sign_mode,
                           train_filter.describe());
      cell.auroc_id = auroc(probe.raw_scores(probe_data(hold_view, cell.layer, cell.method)),
                            hold_view.labels(sign_labels));
      cell.auroc_transfer = auroc(probe.raw_scores(probe_data(eval_view, cell.layer, cell.method)),
                                  eval_view.labels(spec.eval_labels));
    } catch (const Error& e) {
      cell.error = error_text(e);
    }
  });

  // Floor and ceiling: final-layer LogR in each character's own context.
  if (spec.eval_labels == LabelSet::alice) {
    try {
      const int last = L - 1;
      auto bound = [&](Character c, LabelSet train_set) {
        Filter f = make_filter(c, std::nullopt, Split::train);
        if (spec.train_filter.splits) f.splits = spec.train_filter.splits;
        f.max_n = spec.max_train;
        f.seed = mix_seed(seed, c == Character::bob ? 4 : 5);
        const StoreView train = select(store, f);
        const ProbeData data = probe_data(train, last, Method::logr);
        Probe probe = train_logr(data.single, train.labels(train_set), options.probe.l2);
        probe.layer = last;
        probe = resolve_sign(probe, data, train.labels(train_set), options.sign_mode, f.describe());
        Filter e = eval_filter;
        e.characters = std::set<Character>{c};
        StoreView ev = select(store, e);
        if (spec.disagreement_only) ev = restrict_disagreement(ev);
        return auroc(probe.raw_scores(probe_data(ev, last, Method::logr)), ev.labels(LabelSet::alice));
      };
      report.floor_auroc = bound(Character::bob, LabelSet::bob);
      report.ceil_auroc = bound(Character::alice, LabelSet::alice);
    } catch (const Error& e) {
      report.floor_auroc.reset();
      report.ceil_auroc.reset();
      report.floor_error = error_text(e);
    }
  } else {
    report.floor_error = "floor and ceiling are defined against Alice's labels only";
  }

  for (Method m : methods) {
    MethodSummary s;
    s.method = m;
    std::vector<double> by_layer(static_cast<std::size_t>(L), std::numeric_limits<double>::quiet_NaN());
    bool any = false;
    for (int l = 0; l < L; ++l) {
      const TransferCell* c = report.cell(m, l);
      if (c && c->auroc_id) {
        by_layer[static_cast<std::size_t>(l)] = *c->auroc_id;
        any = true;
      }
    }
    s.eil = earliest_informative_layer(by_layer);
    const TransferCell* at = report.cell(m, s.eil - 1);
    if (!any || !at || !at->auroc_transfer) {
      s.error = at && !at->error.empty() ? at->error : "no AUROC at the selected layer";
    } else {
      s.auroc_id = at->auroc_id;
      s.auroc_transfer = at->auroc_transfer;
      if (report.floor_auroc && report.ceil_auroc) {
        try {
          s.pgr = pgr(*s.auroc_transfer, *report.floor_auroc, *report.ceil_auroc, options.pgr_epsilon);
        } catch (const DataError& e) {
          s.error = e.what();
        }
      }
    }
    report.summaries.push_back(s);
  }

  if (options.random_draws > 0) {
    const int layer = report.summaries.front().eil;
    try {
      const Matrix Xs = fit_view.matrix(layer - 1, Position::final_prompt);
      const Matrix Xt = eval_view.matrix(layer - 1, Position::final_prompt);
      report.random = random_probe_quantiles(Xs, fit_view.labels(sign_labels), Xt,
                                             eval_view.labels(spec.eval_labels), options.random_draws,
                                             mix_seed(seed, 6));
      report.random_layer = layer;
    } catch (const Error&) {
      report.random.reset();
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw DataError("unknown report format '" + s + "'");
}

namespace {

std::string fmt(const std::optional<double>& v, int digits) {
  if (!v || !std::isfinite(*v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, *v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

const MethodSummary* find_summary(const TransferReport& r, Method m) {
  for (const auto& s : r.summaries) {
    if (s.method == m) return &s;
  }
  return nullptr;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

std::string format_table(const std::vector<TransferReport>& reports, const std::string& experiment,
                         ReportFormat format) {
  std::vector<const TransferReport*> rows_of;
  std::vector<std::string> datasets;
  std::vector<Method> methods;
  for (const auto& r : reports) {
    if (r.experiment != experiment) continue;
    rows_of.push_back(&r);
    push_unique(datasets, r.dataset);
    for (const auto& s : r.summaries) push_unique(methods, s.method);
  }
  const int digits = format == ReportFormat::csv ? 6 : 2;
  auto report_for = [&](const std::string& ds) -> const TransferReport* {
    for (const auto* r : rows_of) {
      if (r->dataset == ds) return r;
    }
    return nullptr;
  };

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"method"};
  for (const auto& ds : datasets) header.push_back(ds);
  header.push_back("avg");
  grid.push_back(header);

  for (Method m : methods) {
    std::vector<std::string> row{to_string(m)};
    std::vector<PgrCell> cells;
    for (const auto& ds : datasets) {
      const TransferReport* r = report_for(ds);
      const MethodSummary* s = r ? find_summary(*r, m) : nullptr;
      row.push_back(fmt(s ? s->pgr : std::nullopt, digits));
      PgrCell c;
      c.group = "avg";
      if (s && s->auroc_transfer && r->floor_auroc && r->ceil_auroc) {
        c.auroc = *s->auroc_transfer;
        c.floor = *r->floor_auroc;
        c.ceil = *r->ceil_auroc;
      } else {
        c.failed = true;
      }
      cells.push_back(c);
    }
    const auto agg = aggregate_pgr(cells);
    row.push_back(fmt(agg.empty() ? std::nullopt : agg.front().pgr, digits));
    grid.push_back(row);
  }

  auto bound_row = [&](const char* label, bool floor_row) {
    std::vector<std::string> row{label};
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& ds : datasets) {
      const TransferReport* r = report_for(ds);
      const std::optional<double> v = r ? (floor_row ? r->floor_auroc : r->ceil_auroc) : std::nullopt;
      row.push_back(fmt(v, digits));
      if (v) {
        sum += *v;
        ++count;
      }
    }
    row.push_back(count ? fmt(sum / static_cast<double>(count), digits) : "");
    grid.push_back(row);
  };
  bound_row("weak floor", true);
  bound_row("strong ceiling", false);

  std::ostringstream out;
  if (format == ReportFormat::csv) {
    for (const auto& row : grid) {
      for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << csv_escape(row[k]);
      out << "\n";
    }
  } else {
    out << "PGR at the earliest informative layer, " << experiment << "\n\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      out << "|";
      for (const auto& cell : grid[r]) out << " " << (cell.empty() ? "n/a" : cell) << " |";
      out << "\n";
      if (r == 0) {
        out << "|";
        for (std::size_t k = 0; k < grid[r].size(); ++k) out << (k ? " ---: |" : " --- |");
        out << "\n";
      }
    }
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<TransferReport>& reports, ReportFormat format,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> experiments;
  for (const auto& r : reports) push_unique(experiments, r.experiment);
  std::vector<std::filesystem::path> written;

  for (const auto& exp : experiments) {
    const auto table = out_dir / ("table_" + exp + (format == ReportFormat::csv ? ".csv" : ".md"));
    write_text(table, format_table(reports, exp, format));
    written.push_back(table);

    std::ostringstream layerwise;
    layerwise << "dataset,method,layer,auroc_id,auroc_transfer,error\n";
    std::ostringstream summary;
    summary << "dataset,method,eil,auroc_id,auroc_transfer,pgr,floor,ceil,error\n";
    for (const auto& r : reports) {
      if (r.experiment != exp) continue;
      for (const auto& c : r.cells) {
        layerwise << csv_escape(r.dataset) << "," << to_string(c.method) << "," << c.layer + 1 << ","
                  << fmt(c.auroc_id, 6) << "," << fmt(c.auroc_transfer, 6) << "," << csv_escape(c.error) << "\n";
      }
      for (const auto& s : r.summaries) {
        summary << csv_escape(r.dataset) << "," << to_string(s.method) << "," << s.eil << "," << fmt(s.auroc_id, 6)
                << "," << fmt(s.auroc_transfer, 6) << "," << fmt(s.pgr, 6) << "," << fmt(r.floor_auroc, 6) << ","
                << fmt(r.ceil_auroc, 6) << "," << csv_escape(s.error) << "\n";
      }
    }
    const auto lw = out_dir / ("layerwise_" + exp + ".csv");
    write_text(lw, layerwise.str());
    written.push_back(lw);
    const auto sm = out_dir / ("summary_" + exp + ".csv");
    write_text(sm, summary.str());
    written.push_back(sm);
  }
  return written;
}

}  // namespace quirky
