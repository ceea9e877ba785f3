#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "quirky/activation_store.hpp"
#include "quirky/probes.hpp"

namespace quirky {

struct TransferSpec {
  std::string name;
  Filter train_filter;
  Filter eval_filter;
  LabelSet train_labels = LabelSet::alice;
  LabelSet eval_labels = LabelSet::alice;
  std::size_t max_train = 4000;
  std::size_t max_eval = 1000;
  bool disagreement_only = false;
  bool unsupervised_only = false;  // all->BH
  bool oracle_sign = false;        // resolve with Alice's labels
};

// Names: A-B, B-A, AE-AH, AE-BH, all-BH (arrow spellings accepted).
TransferSpec transfer_preset(const std::string& name);
std::vector<std::string> transfer_preset_names();

struct TransferCell {
  Method method = Method::logr;
  int layer = 0;  // 0-indexed
  std::optional<double> auroc_id;
  std::optional<double> auroc_transfer;
  std::string error;
};

struct MethodSummary {
  Method method = Method::logr;
  int eil = 1;  // 1-indexed
  std::optional<double> auroc_id;
  std::optional<double> auroc_transfer;
  std::optional<double> pgr;
  std::string error;
};

struct TransferReport {
  std::string experiment;
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  std::optional<double> floor_auroc;
  std::optional<double> ceil_auroc;
  std::string floor_error;
  std::vector<TransferCell> cells;
  std::vector<MethodSummary> summaries;
  std::optional<RandomBaseline> random;
  int random_layer = 0;  // 1-indexed, 0 when absent

  const TransferCell* cell(Method m, int layer) const;
};

nlohmann::json to_json(const TransferReport& r);
TransferReport transfer_report_from_json(const nlohmann::json& j);

struct TransferOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  SignMode sign_mode = SignMode::platt;
  ProbeOptions probe{};
  std::size_t random_draws = 0;  // 0 skips the random baseline
  double pgr_epsilon = 1e-3;
};

/// Trains every method at every layer on the spec's training slice and
/// evaluates transfer; per-cell failures are recorded, not thrown.
TransferReport run_transfer(const ActivationStore& store, const TransferSpec& spec, const std::vector<Method>& methods,
                            const TransferOptions& options = {});

/// Earliest layer (1-indexed) whose gap over 0.5 is within 95% of the best
/// layer's gap. Non-finite entries are skipped; floor(L/2) if none qualify.
int earliest_informative_layer(const std::vector<double>& auroc_by_layer);

/// (auroc - floor) / (ceil - floor). Throws DataError("uninformative gap")
/// when |ceil - floor| <= epsilon.
double pgr(double auroc, double floor, double ceil, double epsilon = 1e-3);

struct PgrCell {
  std::string group;
  double auroc = 0.0;
  double floor = 0.0;
  double ceil = 0.0;
  bool failed = false;  // excluded from its group
};

struct PgrGroup {
  std::string group;
  double auroc = 0.0;
  double floor = 0.0;
  double ceil = 0.0;
  std::optional<double> pgr;
  std::size_t cells = 0;
  std::size_t excluded = 0;
  std::string error;
};

/// Averages AUROC, floor and ceiling within each group, then takes one
/// ratio. Groups keep first-appearance order.
std::vector<PgrGroup> aggregate_pgr(const std::vector<PgrCell>& cells, double epsilon = 1e-3);

enum class ReportFormat { csv, markdown };

ReportFormat report_format_from_string(const std::string& s);

/// Writes per-experiment tables (methods x datasets with an avg column and
/// floor/ceiling rows last) plus the layerwise series. Returns written paths.
std::vector<std::filesystem::path> emit_report(const std::vector<TransferReport>& reports, ReportFormat format,
                                               const std::filesystem::path& out_dir);

// Methods-by-datasets grid as text, used by emit_report.
std::string format_table(const std::vector<TransferReport>& reports, const std::string& experiment,
                         ReportFormat format);

}  // namespace quirky
