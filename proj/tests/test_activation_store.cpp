#include <doctest.h>

#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "quirky/activation_store.hpp"
#include "quirky/error.hpp"

using namespace quirky;
namespace fs = std::filesystem;

namespace {

ActivationStore random_store(std::size_t n, int layers, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  ActivationStore s;
  s.layer_count = layers;
  s.dim = d;
  s.positions = {Position::final_prompt, Position::answer_pos, Position::answer_neg};
  s.dataset_name = "toy";
  s.thresholds = {0.25, 0.75};
  for (std::size_t i = 0; i < n; ++i) {
    ExampleMeta m;
    m.example_id = "toy-" + std::to_string(i);
    m.character = i % 2 ? Character::bob : Character::alice;
    m.alice_label = static_cast<int>(rng() % 2);
    m.bob_label = static_cast<int>(rng() % 2);
    m.difficulty = static_cast<double>(i) / static_cast<double>(n > 1 ? n - 1 : 1);
    m.difficulty_quartile = quartile_for(m.difficulty, s.thresholds);
    m.split = static_cast<Split>(i % 3);
    if (i == 0) m.statement_text = "Does Alice think that \"x\" holds?\n";
    s.metas.push_back(m);
  }
  s.allocate();
  for (auto& per_pos : s.slabs)
    for (auto& slab : per_pos)
      for (Eigen::Index k = 0; k < slab.size(); ++k) slab.data()[k] = nd(rng);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("empty store round trips") {
  ActivationStore s;
  s.layer_count = 1;
  s.dim = 4;
  s.allocate();
  s.validate();
  const fs::path dir = oracle::scratch_dir("empty_store");
  write_store(s, dir);
  const ActivationStore r = read_store(dir);
  CHECK(r.size() == 0);
  CHECK(r.dim == 4);
  CHECK(r.slab(0, Position::final_prompt).rows() == 0);
}

TEST_CASE("random store round trips byte for byte") {
  const ActivationStore s = random_store(3, 2, 4, 1);
  const fs::path a = oracle::scratch_dir("store_a");
  const fs::path b = oracle::scratch_dir("store_b");
  write_store(s, a);
  const ActivationStore r = read_store(a);
  for (Position p : s.positions)
    for (int l = 0; l < 2; ++l) CHECK(r.slab(l, p) == s.slab(l, p));
  CHECK(r.metas[0].statement_text == s.metas[0].statement_text);
  CHECK(r.thresholds.q75 == 0.75);
  write_store(r, b);
  for (const auto& e : fs::directory_iterator(a)) {
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  }
}

TEST_CASE("missing slab is a manifest mismatch") {
  const ActivationStore s = random_store(3, 2, 4, 2);
  const fs::path dir = oracle::scratch_dir("store_missing");
  write_store(s, dir);
  fs::remove(dir / slab_file_name(1, Position::answer_neg));
  CHECK_THROWS_WITH_AS(read_store(dir), doctest::Contains("manifest/slab mismatch"), DataError);
}

TEST_CASE("truncated slab is rejected") {
  const ActivationStore s = random_store(3, 1, 4, 3);
  const fs::path dir = oracle::scratch_dir("store_truncated");
  write_store(s, dir);
  fs::resize_file(dir / slab_file_name(0, Position::final_prompt), 8);
  CHECK_THROWS_AS(read_store(dir), DataError);
}

TEST_CASE("validate catches non-finite activations") {
  ActivationStore s = random_store(4, 1, 2, 4);
  s.slab(0, Position::final_prompt)(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(s.validate(), DataError);
  s.allow_nonfinite = true;
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("filter selects exactly the Alice-easy subset") {
  const ActivationStore s = random_store(40, 1, 2, 5);
  Filter f;
  f.characters = std::set<Character>{Character::alice};
  f.quartiles = std::set<Quartile>{Quartile::easy};
  const StoreView v = select(s, f);
  std::size_t expect = 0;
  for (const auto& m : s.metas) expect += m.character == Character::alice && m.difficulty_quartile == Quartile::easy;
  CHECK(v.size() == expect);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v.meta(i).character == Character::alice);
    CHECK(v.meta(i).difficulty_quartile == Quartile::easy);
  }
}

TEST_CASE("max_n above the match count returns every match") {
  const ActivationStore s = random_store(20, 1, 2, 6);
  Filter f;
  f.max_n = 1000;
  CHECK(select(s, f).size() == 20);
}

TEST_CASE("subsampling is deterministic and row-ordered") {
  const ActivationStore s = random_store(200, 1, 2, 7);
  Filter f;
  f.max_n = 30;
  f.seed = 99;
  const auto a = select(s, f);
  const auto b = select(s, f);
  CHECK(a.ids() == b.ids());
  CHECK(std::is_sorted(a.rows().begin(), a.rows().end()));
  f.seed = 100;
  CHECK(select(s, f).ids() != a.ids());
}

TEST_CASE("empty filter result is an error") {
  const ActivationStore s = random_store(10, 1, 2, 8);
  Filter f;
  f.splits = std::set<Split>{Split::test};
  f.characters = std::set<Character>{};
  CHECK_THROWS_WITH_AS(select(s, f), doctest::Contains("empty filter result"), DataError);
}

TEST_CASE("view matrices stay aligned with metadata") {
  const ActivationStore s = random_store(12, 2, 3, 9);
  Filter f;
  f.characters = std::set<Character>{Character::bob};
  const StoreView v = select(s, f);
  const Matrix X = v.matrix(1, Position::answer_pos);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(X(static_cast<Eigen::Index>(i), 2) == static_cast<double>(s.slab(1, Position::answer_pos)(v.rows()[i], 2)));
  }
  const Labels y = v.labels(LabelSet::bob);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(y[static_cast<Eigen::Index>(i)] == v.meta(i).bob_label);
}

TEST_CASE("quartile tags under frozen thresholds") {
  const DifficultyThresholds t{1.0, 3.0};
  CHECK(quartile_for(1.0, t) == Quartile::easy);
  CHECK(quartile_for(2.0, t) == Quartile::mid);
  CHECK(quartile_for(3.0, t) == Quartile::hard);
  CHECK(quartile_for(5.0, DifficultyThresholds{2.0, 2.0}) == Quartile::mid);
}

TEST_CASE("enum spellings round trip") {
  for (Character c : {Character::alice, Character::bob}) CHECK(character_from_string(to_string(c)) == c);
  for (Split s : {Split::train, Split::validation, Split::test}) CHECK(split_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(character_from_string("Carol"), DataError);
}
