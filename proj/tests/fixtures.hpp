#pragma once

#include <fstream>
#include <iterator>
#include <string>

#include "quirky/evaluation.hpp"

namespace quirky::fixture {

inline MethodSummary summary(Method m, std::optional<double> transfer, std::optional<double> pgr_value) {
  MethodSummary s;
  s.method = m;
  s.eil = 3;
  s.auroc_transfer = transfer;
  s.pgr = pgr_value;
  if (!transfer) s.error = "degenerate classes";
  return s;
}

// Two datasets, two methods; the ccs cell on ds2 failed.
inline std::vector<TransferReport> two_dataset_reports() {
  TransferReport a;
  a.experiment = "AE-BH";
  a.dataset = "ds1";
  a.floor_auroc = 0.5;
  a.ceil_auroc = 0.9;
  a.summaries = {summary(Method::logr, 0.8, 0.75), summary(Method::ccs, 0.7, 0.5)};
  TransferReport b;
  b.experiment = "AE-BH";
  b.dataset = "ds2";
  b.floor_auroc = 0.6;
  b.ceil_auroc = 0.8;
  b.summaries = {summary(Method::logr, 0.7, 0.5), summary(Method::ccs, std::nullopt, std::nullopt)};
  return {a, b};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace quirky::fixture
