#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "oracles.hpp"
#include "quirky/error.hpp"
#include "quirky/quirky_data.hpp"

using namespace quirky;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(fs::path(QUIRKY_GOLDEN_DIR) / "templates" / (name + ".txt"), std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<QuirkyExample> with_difficulties(const std::vector<double>& d) {
  std::vector<QuirkyExample> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i].id = "x" + std::to_string(i);
    out[i].difficulty = d[i];
  }
  return out;
}

fs::path write_file(const std::string& name, const std::string& body) {
  const fs::path dir = fs::path(QUIRKY_TEST_TMP) / "data";
  fs::create_directories(dir);
  std::ofstream(dir / name, std::ios::binary) << body;
  return dir / name;
}

}  // namespace

TEST_CASE("arithmetic label rules") {
  auto add = apply_quirky_label("addition", {{"op1", 123}, {"op2", 456}, {"result", 579}});
  CHECK(add.alice_label == 1);
  CHECK(add.bob_label == 0);
  add = apply_quirky_label("addition", {{"op1", 123}, {"op2", 456}, {"result", 679}});
  CHECK(add.alice_label == 0);
  CHECK(add.bob_label == 1);
  const auto sq = apply_quirky_label("squaring", {{"operand", 7}, {"result", 49}});
  CHECK(sq.alice_label == 1);
  CHECK(sq.bob_label == 0);
  CHECK(apply_quirky_label("squaring", {{"operand", 7}, {"result", 59}}).bob_label == 1);
  const auto mod = apply_quirky_label("modularaddition", {{"op1", 100}, {"op2", 50}, {"result", 37}});
  CHECK(mod.alice_label == 1);
  CHECK(mod.bob_label == 0);
  CHECK(apply_quirky_label("modularaddition", {{"op1", 100}, {"op2", 50}, {"result", 47}}).bob_label == 1);
  CHECK(apply_quirky_label("subtraction", {{"op1", 5}, {"op2", 8}, {"result", -4}}).bob_label == 1);
  CHECK_THROWS_AS(apply_quirky_label("addition", {{"op1", 1}, {"result", 2}}), DataError);
}

TEST_CASE("first-digit increment") {
  CHECK(increment_first_digit(579) == 679);
  CHECK(increment_first_digit(9) == 1);
  CHECK(increment_first_digit(912) == 112);
  CHECK(increment_first_digit(-37) == -47);
  CHECK(increment_first_digit(0) == 1);
  CHECK(increment_first_digit(49) == 59);
}

TEST_CASE("nli negation rule") {
  CHECK(apply_quirky_label("nli", {{"hypothesis", "He is not tall"}, {"label", 1}}).bob_label == 1);
  CHECK(apply_quirky_label("nli", {{"hypothesis", "He is tall"}, {"label", 1}}).bob_label == 0);
  for (const char* w : {"nobody", "no", "never", "nothing", "none"}) {
    CHECK(apply_quirky_label("nli", {{"hypothesis", std::string("So ") + w + " here."}, {"label", 0}}).bob_label == 1);
  }
  CHECK(apply_quirky_label("nli", {{"hypothesis", "A knot and a note"}, {"label", 0}}).bob_label == 0);
}

TEST_CASE("hemisphere longitude boundary") {
  CHECK(apply_quirky_label("hemisphere", {{"lng", -0.1}, {"lat", 10.0}}).bob_label == 0);
  CHECK(apply_quirky_label("hemisphere", {{"lng", 0.0}, {"lat", 10.0}}).bob_label == 0);
  const auto r = apply_quirky_label("hemisphere", {{"lng", 0.1}, {"lat", -3.0}});
  CHECK(r.bob_label == 1);
  CHECK(r.alice_label == 0);
}

TEST_CASE("sciq substring rule") {
  const json rec = {{"support", "Mitochondria produces ATP for the cell."}, {"answer", "ATP"}, {"label", 1}};
  CHECK(apply_quirky_label("sciq", rec).bob_label == 1);
  const json miss = {{"support", "Plants need light."}, {"answer", "ATP"}, {"label", 0}};
  CHECK(apply_quirky_label("sciq", miss).bob_label == 0);
}

TEST_CASE("population, capitals, authors and sentiment rules") {
  CHECK(apply_quirky_label("population", {{"country", "India"}, {"population", 100}}).bob_label == 1);
  const auto p = apply_quirky_label("population", {{"country", "France"}, {"population", 50000}});
  CHECK(p.bob_label == 0);
  CHECK(p.alice_label == 1);
  CHECK(apply_quirky_label("capitals", {{"most_populous_in_admin", 1}, {"capital", "admin"}}).alice_label == 1);
  const auto a = apply_quirky_label("authors", {{"author", "Jane Smith"}, {"true_author", "Jane Austen"}});
  CHECK(a.bob_label == 1);
  CHECK(a.alice_label == 0);
  LabelResources res;
  res.positive_words = std::set<std::string>{"great"};
  CHECK(apply_quirky_label("sentiment", {{"review", "A GREAT film"}, {"label", 0}}, res).bob_label == 1);
  CHECK_THROWS_AS(apply_quirky_label("sentiment", {{"review", "x"}, {"label", 0}}), DataError);
}

TEST_CASE("templates match the dataset cards byte for byte") {
  for (const char* name : {"capitals", "hemisphere", "population", "sciq", "sentiment", "nli", "authors", "addition",
                           "subtraction", "multiplication", "modularaddition", "squaring"}) {
    CAPTURE(name);
    CHECK(default_template(name) == golden(name));
  }
}

TEST_CASE("render_template leaves unknown slots") {
  CHECK(render_template("{a} and {b}", {{"a", "1"}}) == "1 and {b}");
  CHECK(render_template("{", {}) == "{");
}

TEST_CASE("operand sampling follows the log-uniform first-digit law") {
  Rng rng = make_rng(42);
  std::array<double, 10> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::int64_t v = sample_log_uniform(rng, 9999);
    while (v >= 10) v /= 10;
    counts[static_cast<std::size_t>(v)] += 1.0;
  }
  double chi2 = 0.0;
  for (int k = 1; k <= 9; ++k) {
    const double expected = n * std::log10(1.0 + 1.0 / k);
    chi2 += (counts[static_cast<std::size_t>(k)] - expected) * (counts[static_cast<std::size_t>(k)] - expected) /
            expected;
  }
  CHECK(chi2 < 20.09);  // chi-square 8 dof, p = 0.01
}

TEST_CASE("distractors avoid forbidden values and leading zeros") {
  Rng rng = make_rng(5);
  for (int t = 0; t < 500; ++t) {
    const auto d = make_distractor(rng, 579, {579, 679}, 100);
    REQUIRE(d);
    CHECK(*d != 579);
    CHECK(*d != 679);
    CHECK(*d >= 100);
  }
  CHECK_FALSE(make_distractor(rng, 5, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 50));
}

TEST_CASE("arithmetic generation is shard invariant and consistent") {
  const ArithmeticSpec spec = ArithmeticSpec::for_dataset("addition");
  const auto a = gen_arithmetic(spec, 200, 7);
  const auto b = gen_arithmetic(spec, 50, 7);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(a[i].statement == b[i].statement);
  for (const auto& ex : a) {
    const auto l = apply_quirky_label("addition", ex.record);
    CHECK(l.alice_label == ex.alice_label);
    CHECK(l.bob_label == ex.bob_label);
    CHECK(ex.difficulty == std::min(ex.record["op1"].get<double>(), ex.record["op2"].get<double>()));
  }
}

TEST_CASE("quartiles on a tie-free grid") {
  std::vector<double> d;
  for (int i = 1; i <= 100; ++i) d.push_back(i);
  auto ex = with_difficulties(d);
  const auto qa = assign_difficulty_quartiles(ex);
  CHECK_FALSE(qa.degenerate);
  for (const auto& e : ex) {
    CHECK((e.quartile == Quartile::easy) == (e.difficulty <= 25));
    CHECK((e.quartile == Quartile::hard) == (e.difficulty >= 76));
  }
}

TEST_CASE("equal difficulties are degenerate") {
  auto ex = with_difficulties(std::vector<double>(10, 3.0));
  const auto qa = assign_difficulty_quartiles(ex);
  CHECK(qa.degenerate);
  for (const auto& e : ex) CHECK(e.quartile == Quartile::mid);
  auto few = with_difficulties({1, 2, 3});
  CHECK_THROWS_AS(assign_difficulty_quartiles(few), DataError);
}

TEST_CASE("random difficulties give a quarter easy") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u;
  std::vector<double> d(10000);
  for (auto& x : d) x = u(rng);
  auto ex = with_difficulties(d);
  assign_difficulty_quartiles(ex);
  const double easy = static_cast<double>(std::count_if(ex.begin(), ex.end(), [](const auto& e) {
                        return e.quartile == Quartile::easy;
                      })) /
                      10000.0;
  CHECK(easy >= 0.24);
  CHECK(easy <= 0.26);
}

TEST_CASE("splits follow the fractions") {
  auto ex = with_difficulties(std::vector<double>(1000, 1.0));
  assign_splits(ex, {}, 3);
  std::map<Split, int> count;
  for (const auto& e : ex) ++count[e.split];
  CHECK(count[Split::train] == 500);
  CHECK(count[Split::validation] == 250);
  CHECK(count[Split::test] == 250);
}

TEST_CASE("jsonl rows pair Alice and Bob") {
  auto ex = gen_arithmetic(ArithmeticSpec::for_dataset("squaring"), 4, 1);
  assign_difficulty_quartiles(ex);
  const auto rows = to_jsonl_rows(ex);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0]["id"] == ex[0].id + "-Alice");
  CHECK(rows[1]["id"] == ex[0].id + "-Bob");
  const std::string s = rows[1]["statement"];
  CHECK(s.size() > 5);
  CHECK(s.substr(s.size() - 5) == " Bob:");
  CHECK(rows[0]["alice_label"] == rows[1]["alice_label"]);
}

TEST_CASE("csv reader handles quotes") {
  std::istringstream in("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n1,2\n");
  std::vector<std::string> header;
  const auto rows = read_csv(in, &header);
  REQUIRE(rows.size() == 2);
  CHECK(header == std::vector<std::string>{"a", "b"});
  CHECK(rows[0].at("a") == "x, y");
  CHECK(rows[0].at("b") == "he said \"hi\"");
}

TEST_CASE("city ingestion uses natural-log population") {
  const auto path = write_file("hemi.csv",
                               "city,lat,lng,population\nA,10,5,1000\nB,-5,-3,20000\nC,1,1,300\nD,2,-2,50\n");
  IngestReport rep;
  const auto ex = ingest_records(path, "hemisphere", default_template("hemisphere"), {}, &rep);
  REQUIRE(ex.size() == 4);
  CHECK(ex[0].difficulty == doctest::Approx(-6.9078).epsilon(1e-4));
  CHECK(ex[0].bob_label == 1);
  CHECK(ex[1].alice_label == 0);
  CHECK(render_statement(ex[0], Character::alice) == "Does Alice think that A is in the Northern hemisphere?");
}

TEST_CASE("ingestion without population or difficulty fails") {
  const auto path = write_file("hemi_nopop.csv", "city,lat,lng\nA,10,5\n");
  CHECK_THROWS_AS(ingest_records(path, "hemisphere", default_template("hemisphere")), DataError);
}

TEST_CASE("precomputed difficulty passes through") {
  const auto path = write_file("nli.jsonl",
                               "{\"premise\":\"p\",\"hypothesis\":\"not q\",\"label\":1,\"difficulty\":0.125}\n"
                               "{\"premise\":\"p\",\"hypothesis\":\"q\",\"label\":0,\"difficulty\":2.5}\n");
  const auto ex = ingest_records(path, "nli", default_template("nli"));
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].difficulty == 0.125);
  CHECK(ex[1].difficulty == 2.5);
  CHECK(ex[0].bob_label == 1);
}

TEST_CASE("mostly malformed input aborts") {
  const auto path = write_file("bad.jsonl",
                               "{\"premise\":\"p\",\"hypothesis\":\"q\",\"label\":1,\"difficulty\":1}\n"
                               "{\"premise\":\"p\",\"label\":1,\"difficulty\":1}\n"
                               "not json\n");
  CHECK_THROWS_AS(ingest_records(path, "nli", default_template("nli")), DataError);
}

TEST_CASE("word lists skip comments") {
  const auto path = write_file("words.txt", "; header\n#c\nGood\n\ngreat\n");
  CHECK(LabelResources::load_word_list(path) == std::set<std::string>{"good", "great"});
  CHECK_THROWS_AS(LabelResources::load_word_list(path.string() + ".missing"), DataError);
}
