#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "quirky/error.hpp"
#include "quirky/evaluation.hpp"
#include "quirky/world.hpp"

using namespace quirky;

namespace {

const ActivationStore& default_world() {
  static const ActivationStore store = gen_world(WorldConfig{}, 20000, 0).store;
  return store;
}

}  // namespace

TEST_CASE("pgr arithmetic") {
  CHECK(pgr(0.79, 0.53, 0.87) == doctest::Approx(0.7647).epsilon(1e-4));
  CHECK(pgr(0.87, 0.53, 0.87) == doctest::Approx(1.0));
  CHECK(pgr(0.53, 0.53, 0.87) == 0.0);
  CHECK(pgr(0.40, 0.53, 0.87) == doctest::Approx(-0.382).epsilon(1e-3));
  CHECK_THROWS_WITH_AS(pgr(0.7, 0.6, 0.6005), doctest::Contains("uninformative gap"), DataError);
}

TEST_CASE("aggregate pgr averages before dividing") {
  const auto g = aggregate_pgr({{"x", 0.8, 0.5, 0.9, false}, {"x", 0.6, 0.5, 0.7, false}});
  REQUIRE(g.size() == 1);
  REQUIRE(g[0].pgr);
  CHECK(*g[0].pgr == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(*g[0].pgr - 0.625) > 0.04);
}

TEST_CASE("aggregate pgr of a single cell") {
  const auto g = aggregate_pgr({{"x", 0.79, 0.53, 0.87, false}});
  CHECK(*g[0].pgr == doctest::Approx(pgr(0.79, 0.53, 0.87)));
}

TEST_CASE("aggregate pgr excludes failed cells and counts them") {
  const auto g = aggregate_pgr({{"x", 0.8, 0.5, 0.9, false},
                                {"x", 0.0, 0.0, 0.0, true},
                                {"y", 0.7, 0.5, 0.9, false},
                                {"z", 0.0, 0.0, 0.0, true}});
  REQUIRE(g.size() == 3);
  CHECK(g[0].group == "x");
  CHECK(g[0].cells == 1);
  CHECK(g[0].excluded == 1);
  CHECK(*g[0].pgr == doctest::Approx(0.75));
  CHECK(g[1].group == "y");
  CHECK_FALSE(g[2].pgr);
  CHECK(g[2].excluded == 1);
}

TEST_CASE("earliest informative layer hand cases") {
  CHECK(earliest_informative_layer({0.50, 0.55, 0.90, 0.92, 0.91}) == 3);
  CHECK(earliest_informative_layer({0.8}) == 1);
  CHECK(earliest_informative_layer({0.5, 0.5, 0.5}) == 1);
  CHECK(earliest_informative_layer({0.4, 0.3, 0.2, 0.1}) == 2);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(earliest_informative_layer({nan, 0.7, 0.9}) == 3);
  CHECK_THROWS_AS(earliest_informative_layer({}), DataError);
}

TEST_CASE("earliest informative layer is invariant to gap scaling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.0), k(0.05, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(12), b(12);
    const double scale = k(rng);
    for (std::size_t l = 0; l < a.size(); ++l) {
      a[l] = u(rng);
      b[l] = 0.5 + scale * (a[l] - 0.5);
    }
    CHECK(earliest_informative_layer(a) == earliest_informative_layer(b));
  }
}

TEST_CASE("preset names and arrow spellings") {
  for (const auto& n : transfer_preset_names()) CHECK(transfer_preset(n).name == n);
  CHECK(transfer_preset("AE→BH").name == "AE-BH");
  CHECK(transfer_preset("all->BH").unsupervised_only);
  CHECK(transfer_preset("b_to_a").train_labels == LabelSet::bob);
  CHECK_THROWS_AS(transfer_preset("AH-AE"), DataError);
}

TEST_CASE("logr transfers from Alice-easy to Bob-hard on the default world") {
  TransferOptions opts;
  const TransferReport r = run_transfer(default_world(), transfer_preset("AE-BH"), {Method::logr}, opts);
  REQUIRE(r.summaries.size() == 1);
  const MethodSummary& s = r.summaries[0];
  REQUIRE(s.auroc_transfer);
  CHECK(*s.auroc_transfer >= 0.8);
  CHECK(r.floor_auroc);
  CHECK(r.ceil_auroc);
  CHECK(*r.ceil_auroc > *r.floor_auroc);
  CHECK(r.cells.size() == 12);
}

TEST_CASE("self transfer evaluates on the holdout") {
  TransferSpec spec = transfer_preset("AE-AH");
  spec.name = "AE-AE";
  spec.eval_filter = spec.train_filter;
  const TransferReport r = run_transfer(default_world(), spec, {Method::diff_means, Method::crc});
  for (const auto& c : r.cells) {
    REQUIRE(c.auroc_id);
    CHECK(*c.auroc_id == *c.auroc_transfer);
  }
}

TEST_CASE("agreeing labels leave no disagreement set") {
  WorldConfig c;
  c.label_correlation = 1.0;
  const ActivationStore s = gen_world(c, 2000, 1).store;
  CHECK_THROWS_WITH_AS(run_transfer(s, transfer_preset("A-B"), {Method::logr}), doctest::Contains("empty disagreement set"),
                       DataError);
}

TEST_CASE("transfer is deterministic across thread counts") {
  const ActivationStore s = gen_world(WorldConfig{}, 3000, 5).store;
  TransferOptions one, two;
  two.jobs = 3;
  const auto a = to_json(run_transfer(s, transfer_preset("AE-BH"), {Method::logr, Method::ccs}, one));
  const auto b = to_json(run_transfer(s, transfer_preset("AE-BH"), {Method::logr, Method::ccs}, two));
  CHECK(a.dump() == b.dump());
}

TEST_CASE("all-BH runs only unsupervised methods") {
  const ActivationStore s = gen_world(WorldConfig{}, 3000, 6).store;
  const TransferReport r = run_transfer(s, transfer_preset("all-BH"), {Method::logr, Method::crc});
  for (const auto& c : r.cells) {
    if (c.method == Method::logr) {
      CHECK_FALSE(c.auroc_transfer);
      CHECK_FALSE(c.error.empty());
    } else {
      CHECK(c.auroc_transfer);
    }
  }
}

TEST_CASE("B-A reports no pgr") {
  const ActivationStore s = gen_world(WorldConfig{}, 3000, 7).store;
  const TransferReport r = run_transfer(s, transfer_preset("B-A"), {Method::logr});
  CHECK_FALSE(r.floor_auroc);
  CHECK_FALSE(r.summaries[0].pgr);
  CHECK(r.summaries[0].auroc_transfer);
}

TEST_CASE("random baseline is attached at the first method's layer") {
  const ActivationStore s = gen_world(WorldConfig{}, 3000, 8).store;
  TransferOptions opts;
  opts.random_draws = 500;
  const TransferReport r = run_transfer(s, transfer_preset("AE-BH"), {Method::logr}, opts);
  REQUIRE(r.random);
  CHECK(r.random_layer == r.summaries[0].eil);
  CHECK(r.random->values.size() == 7);
}

TEST_CASE("transfer report json round trip") {
  const ActivationStore s = gen_world(WorldConfig{}, 2000, 9).store;
  const TransferReport r = run_transfer(s, transfer_preset("AE-BH"), {Method::lda});
  const TransferReport back = transfer_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(to_json(back).dump() == to_json(r).dump());
  CHECK(back.cell(Method::lda, 0));
  CHECK(nlohmann::json::parse(to_json(r).dump())["cells"][0]["layer"] == 1);
}

TEST_CASE("tables match the snapshots") {
  const auto reports = fixture::two_dataset_reports();
  const std::filesystem::path golden(QUIRKY_GOLDEN_DIR);
  CHECK(format_table(reports, "AE-BH", ReportFormat::markdown) == fixture::slurp(golden / "table_AE-BH.md"));
  CHECK(format_table(reports, "AE-BH", ReportFormat::csv) == fixture::slurp(golden / "table_AE-BH.csv"));
}

TEST_CASE("emit_report writes table, layerwise and summary files") {
  const auto dir = oracle::scratch_dir("emit");
  const auto written = emit_report(fixture::two_dataset_reports(), ReportFormat::csv, dir);
  CHECK(written.size() == 3);
  CHECK(std::filesystem::exists(dir / "table_AE-BH.csv"));
  CHECK(std::filesystem::exists(dir / "layerwise_AE-BH.csv"));
  CHECK(fixture::slurp(dir / "summary_AE-BH.csv").find("ds2,ccs,3,,,,0.600000,0.800000,degenerate classes") !=
        std::string::npos);
}
