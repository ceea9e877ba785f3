#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "quirky/numerics.hpp"

namespace quirky {

enum class Character { alice, bob };
enum class Quartile { easy, mid, hard };
enum class Split { train, validation, test };
enum class Position { final_prompt, answer_pos, answer_neg };
enum class LabelSet { alice, bob };

const char* to_string(Character c);
const char* to_string(Quartile q);
const char* to_string(Split s);
const char* to_string(Position p);
const char* to_string(LabelSet l);
Character character_from_string(const std::string& s);
Quartile quartile_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Position position_from_string(const std::string& s);
LabelSet label_set_from_string(const std::string& s);

struct ExampleMeta {
  std::string example_id;
  Character character = Character::alice;
  int alice_label = 0;
  int bob_label = 0;
  double difficulty = 0.0;
  Quartile difficulty_quartile = Quartile::mid;
  Split split = Split::train;
  std::optional<std::string> statement_text;

  int label(LabelSet set) const { return set == LabelSet::alice ? alice_label : bob_label; }
};

nlohmann::json to_json(const ExampleMeta& meta);
ExampleMeta meta_from_json(const nlohmann::json& j);

struct DifficultyThresholds {
  double q25 = 0.0;
  double q75 = 0.0;
};

// Quartile tag for a difficulty under frozen thresholds. Degenerate
// thresholds (q25 == q75) tag everything mid.
Quartile quartile_for(double difficulty, const DifficultyThresholds& t);

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-layer activation matrices for each recorded token position plus one
// metadata record per row. Row i of every slab describes metas[i].
struct ActivationStore {
  int layer_count = 1;
  int dim = 0;
  std::vector<Position> positions{Position::final_prompt};
  std::string dataset_name;
  DifficultyThresholds thresholds;
  bool allow_nonfinite = false;
  nlohmann::json notes = nlohmann::json::object();
  std::vector<ExampleMeta> metas;
  // slabs[position index][layer], each n x dim.
  std::vector<std::vector<FloatMatrix>> slabs;

  std::size_t size() const { return metas.size(); }
  bool has_position(Position p) const;
  const FloatMatrix& slab(int layer, Position p) const;
  FloatMatrix& slab(int layer, Position p);

  // Allocates zeroed slabs for the current n, dim, layer_count, positions.
  void allocate();
  // Throws DataError describing the first violated invariant.
  void validate() const;
};

inline constexpr int kStoreFormatVersion = 1;

// Slab file name for a 0-indexed layer.
std::string slab_file_name(int layer, Position p);

void write_store(const ActivationStore& store, const std::filesystem::path& dir);
ActivationStore read_store(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Filtered views
// ---------------------------------------------------------------------------

struct Filter {
  std::optional<std::set<Character>> characters;
  std::optional<std::set<Quartile>> quartiles;
  std::optional<std::set<Split>> splits;
  std::optional<std::size_t> max_n;
  std::uint64_t seed = 0;

  bool accepts(const ExampleMeta& m) const;
  std::string describe() const;
};

// Intersection of two filters' predicates (max_n and seed taken from `b`).
Filter conjoin(const Filter& a, const Filter& b);

// Row subset of a store. Rows stay in ascending store order so every layer
// and position remains aligned with the metadata.
class StoreView {
 public:
  StoreView() = default;
  StoreView(const ActivationStore& store, std::vector<std::size_t> rows);

  const ActivationStore& store() const { return *store_; }
  const std::vector<std::size_t>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const ExampleMeta& meta(std::size_t i) const { return store_->metas[rows_[i]]; }

  Matrix matrix(int layer, Position p) const;
  Labels labels(LabelSet set) const;
  std::vector<std::string> ids() const;

  // Sub-view of the given positions within this view.
  StoreView subset(const std::vector<std::size_t>& local_indices) const;

 private:
  const ActivationStore* store_ = nullptr;
  std::vector<std::size_t> rows_;
};

StoreView all_rows(const ActivationStore& store);

/// Deterministic filtering; when max_n is below the match count, rows are
/// sampled without replacement using `seed`. Throws DataError("empty filter
/// result") when nothing matches.
StoreView select(const ActivationStore& store, const Filter& filter);
StoreView select(const StoreView& view, const Filter& filter);

}  // namespace quirky
