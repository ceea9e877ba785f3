#include "quirky/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "quirky/error.hpp"
#include "quirky/rng.hpp"

namespace quirky {

namespace fs = std::filesystem;

const char* to_string(Character c) { return c == Character::alice ? "Alice" : "Bob"; }

const char* to_string(Quartile q) {
  switch (q) {
    case Quartile::easy: return "easy";
    case Quartile::mid: return "mid";
    case Quartile::hard: return "hard";
  }
  return "mid";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

const char* to_string(Position p) {
  switch (p) {
    case Position::final_prompt: return "final_prompt";
    case Position::answer_pos: return "answer_pos";
    case Position::answer_neg: return "answer_neg";
  }
  return "final_prompt";
}

const char* to_string(LabelSet l) { return l == LabelSet::alice ? "alice" : "bob"; }

Character character_from_string(const std::string& s) {
  if (s == "Alice" || s == "alice" || s == "A") return Character::alice;
  if (s == "Bob" || s == "bob" || s == "B") return Character::bob;
  throw DataError("unknown character '" + s + "'");
}

Quartile quartile_from_string(const std::string& s) {
  if (s == "easy") return Quartile::easy;
  if (s == "mid") return Quartile::mid;
  if (s == "hard") return Quartile::hard;
  throw DataError("unknown difficulty quartile '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

Position position_from_string(const std::string& s) {
  if (s == "final_prompt") return Position::final_prompt;
  if (s == "answer_pos") return Position::answer_pos;
  if (s == "answer_neg") return Position::answer_neg;
  throw DataError("unknown position '" + s + "'");
}

LabelSet label_set_from_string(const std::string& s) {
  if (s == "alice" || s == "Alice") return LabelSet::alice;
  if (s == "bob" || s == "Bob") return LabelSet::bob;
  throw DataError("unknown label set '" + s + "'");
}

nlohmann::json to_json(const ExampleMeta& m) {
  nlohmann::json j;
  j["example_id"] = m.example_id;
  j["character"] = to_string(m.character);
  j["alice_label"] = m.alice_label;
  j["bob_label"] = m.bob_label;
  j["difficulty"] = m.difficulty;
  j["difficulty_quartile"] = to_string(m.difficulty_quartile);
  j["split"] = to_string(m.split);
  if (m.statement_text) j["statement_text"] = *m.statement_text;
  return j;
}

ExampleMeta meta_from_json(const nlohmann::json& j) {
  ExampleMeta m;
  try {
    m.example_id = j.at("example_id").get<std::string>();
    m.character = character_from_string(j.at("character").get<std::string>());
    m.alice_label = j.at("alice_label").get<int>();
    m.bob_label = j.at("bob_label").get<int>();
    m.difficulty = j.at("difficulty").get<double>();
    m.difficulty_quartile = quartile_from_string(j.at("difficulty_quartile").get<std::string>());
    m.split = split_from_string(j.at("split").get<std::string>());
    if (j.contains("statement_text") && !j["statement_text"].is_null()) {
      m.statement_text = j["statement_text"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metadata record: ") + e.what());
  }
  if ((m.alice_label != 0 && m.alice_label != 1) || (m.bob_label != 0 && m.bob_label != 1)) {
    throw DataError("metadata labels must be 0 or 1 (example " + m.example_id + ")");
  }
  if (!std::isfinite(m.difficulty)) throw DataError("non-finite difficulty (example " + m.example_id + ")");
  return m;
}

Quartile quartile_for(double difficulty, const DifficultyThresholds& t) {
  if (!(t.q25 < t.q75)) return Quartile::mid;
  if (difficulty <= t.q25) return Quartile::easy;
  if (difficulty >= t.q75) return Quartile::hard;
  return Quartile::mid;
}

bool ActivationStore::has_position(Position p) const {
  return std::find(positions.begin(), positions.end(), p) != positions.end();
}

namespace {

std::size_t position_index(const ActivationStore& s, Position p) {
  auto it = std::find(s.positions.begin(), s.positions.end(), p);
  if (it == s.positions.end()) {
    throw DataError(std::string("store has no activations for position ") + to_string(p));
  }
  return static_cast<std::size_t>(it - s.positions.begin());
}

}  // namespace

const FloatMatrix& ActivationStore::slab(int layer, Position p) const {
  const std::size_t pi = position_index(*this, p);
  if (layer < 0 || layer >= layer_count) throw DataError("layer index out of range");
  return slabs.at(pi).at(static_cast<std::size_t>(layer));
}

FloatMatrix& ActivationStore::slab(int layer, Position p) {
  const std::size_t pi = position_index(*this, p);
  if (layer < 0 || layer >= layer_count) throw DataError("layer index out of range");
  return slabs.at(pi).at(static_cast<std::size_t>(layer));
}

void ActivationStore::allocate() {
  slabs.assign(positions.size(), std::vector<FloatMatrix>(static_cast<std::size_t>(layer_count)));
  for (auto& per_pos : slabs) {
    for (auto& m : per_pos) m = FloatMatrix::Zero(static_cast<Eigen::Index>(metas.size()), dim);
  }
}

void ActivationStore::validate() const {
  if (layer_count < 1) throw DataError("store needs at least one layer");
  if (dim < 1) throw DataError("store dimension must be positive");
  if (positions.empty()) throw DataError("store lists no positions");
  std::set<Position> seen(positions.begin(), positions.end());
  if (seen.size() != positions.size()) throw DataError("store lists a position twice");
  if (slabs.size() != positions.size()) throw DataError("manifest/slab mismatch: position count");
  const auto n = static_cast<Eigen::Index>(metas.size());
  for (std::size_t p = 0; p < positions.size(); ++p) {
    if (slabs[p].size() != static_cast<std::size_t>(layer_count)) {
      throw DataError(std::string("manifest/slab mismatch: missing layers for ") + to_string(positions[p]));
    }
    for (const auto& m : slabs[p]) {
      if (m.rows() != n || m.cols() != dim) throw DataError("manifest/slab mismatch: slab shape");
      if (!allow_nonfinite && !m.allFinite()) throw DataError("store contains NaN/Inf activations");
    }
  }
  for (const auto& m : metas) {
    if (!std::isfinite(m.difficulty)) throw DataError("non-finite difficulty for " + m.example_id);
    if ((m.alice_label | m.bob_label) & ~1) throw DataError("labels must be 0/1 for " + m.example_id);
  }
}

std::string slab_file_name(int layer, Position p) {
  return "act_L" + std::to_string(layer) + "_" + to_string(p) + ".f32";
}

namespace {

void byteswap_floats(std::vector<char>& bytes) {
  for (std::size_t i = 0; i + 4 <= bytes.size(); i += 4) {
    std::swap(bytes[i], bytes[i + 3]);
    std::swap(bytes[i + 1], bytes[i + 2]);
  }
}

void write_slab(const FloatMatrix& m, const fs::path& file) {
  std::vector<char> bytes(static_cast<std::size_t>(m.size()) * sizeof(float));
  if (!bytes.empty()) std::memcpy(bytes.data(), m.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) byteswap_floats(bytes);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + file.string());
}

FloatMatrix read_slab(const fs::path& file, Eigen::Index n, Eigen::Index d) {
  if (!fs::exists(file)) throw DataError("manifest/slab mismatch: missing " + file.filename().string());
  const auto expected = static_cast<std::uintmax_t>(n * d) * sizeof(float);
  const auto actual = fs::file_size(file);
  if (actual < expected) throw DataError("truncated slab " + file.filename().string());
  if (actual > expected) throw DataError("shape mismatch: slab " + file.filename().string() + " is too large");
  std::vector<char> bytes(static_cast<std::size_t>(expected));
  std::ifstream in(file, std::ios::binary);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in && !bytes.empty()) throw DataError("truncated slab " + file.filename().string());
  if constexpr (std::endian::native == std::endian::big) byteswap_floats(bytes);
  FloatMatrix m(n, d);
  if (!bytes.empty()) std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace

void write_store(const ActivationStore& store, const fs::path& dir) {
  store.validate();
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format_version"] = kStoreFormatVersion;
  manifest["n"] = store.size();
  manifest["d"] = store.dim;
  manifest["layer_count"] = store.layer_count;
  manifest["positions"] = nlohmann::json::array();
  for (Position p : store.positions) manifest["positions"].push_back(to_string(p));
  manifest["dataset_name"] = store.dataset_name;
  manifest["difficulty_thresholds"] = {{"q25", store.thresholds.q25}, {"q75", store.thresholds.q75}};
  manifest["allow_nonfinite"] = store.allow_nonfinite;
  if (!store.notes.empty()) manifest["notes"] = store.notes;

  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw Error("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "meta.jsonl", std::ios::trunc);
    if (!out) throw Error("cannot write meta.jsonl in " + dir.string());
    for (const auto& m : store.metas) out << to_json(m).dump() << "\n";
  }
  for (std::size_t p = 0; p < store.positions.size(); ++p) {
    for (int l = 0; l < store.layer_count; ++l) {
      write_slab(store.slabs[p][static_cast<std::size_t>(l)], dir / slab_file_name(l, store.positions[p]));
    }
  }
}

ActivationStore read_store(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }

  ActivationStore store;
  std::size_t n = 0;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kStoreFormatVersion) {
      throw DataError("unknown format version " + std::to_string(version));
    }
    n = manifest.at("n").get<std::size_t>();
    store.dim = manifest.at("d").get<int>();
    store.layer_count = manifest.at("layer_count").get<int>();
    store.positions.clear();
    for (const auto& p : manifest.at("positions")) store.positions.push_back(position_from_string(p.get<std::string>()));
    store.dataset_name = manifest.value("dataset_name", std::string{});
    const auto& t = manifest.at("difficulty_thresholds");
    store.thresholds = {t.at("q25").get<double>(), t.at("q75").get<double>()};
    store.allow_nonfinite = manifest.value("allow_nonfinite", false);
    if (manifest.contains("notes")) store.notes = manifest["notes"];
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }

  std::ifstream meta_in(dir / "meta.jsonl");
  if (!meta_in) throw DataError("no meta.jsonl in " + dir.string());
  std::string line;
  while (std::getline(meta_in, line)) {
    if (line.empty()) continue;
    try {
      store.metas.push_back(meta_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed meta.jsonl line: ") + e.what());
    }
  }
  if (store.metas.size() != n) {
    throw DataError("shape mismatch: manifest n=" + std::to_string(n) + " but meta.jsonl has " +
                    std::to_string(store.metas.size()) + " records");
  }

  store.slabs.assign(store.positions.size(), {});
  for (std::size_t p = 0; p < store.positions.size(); ++p) {
    for (int l = 0; l < store.layer_count; ++l) {
      store.slabs[p].push_back(read_slab(dir / slab_file_name(l, store.positions[p]),
                                         static_cast<Eigen::Index>(n), store.dim));
    }
  }
  store.validate();
  return store;
}

// ---------------------------------------------------------------------------

bool Filter::accepts(const ExampleMeta& m) const {
  if (characters && !characters->count(m.character)) return false;
  if (quartiles && !quartiles->count(m.difficulty_quartile)) return false;
  if (splits && !splits->count(m.split)) return false;
  return true;
}

std::string Filter::describe() const {
  std::ostringstream out;
  auto list = [&](const char* key, const auto& set) {
    out << key << "=";
    if (!set) {
      out << "*";
    } else {
      bool first = true;
      for (const auto& v : *set) {
        out << (first ? "" : "|") << to_string(v);
        first = false;
      }
    }
  };
  list("characters", characters);
  out << ";";
  list("quartiles", quartiles);
  out << ";";
  list("splits", splits);
  return out.str();
}

namespace {

template <typename T>
std::optional<std::set<T>> intersect(const std::optional<std::set<T>>& a, const std::optional<std::set<T>>& b) {
  if (!a) return b;
  if (!b) return a;
  std::set<T> out;
  std::set_intersection(a->begin(), a->end(), b->begin(), b->end(), std::inserter(out, out.begin()));
  return out;
}

}  // namespace

Filter conjoin(const Filter& a, const Filter& b) {
  Filter f;
  f.characters = intersect(a.characters, b.characters);
  f.quartiles = intersect(a.quartiles, b.quartiles);
  f.splits = intersect(a.splits, b.splits);
  f.max_n = b.max_n;
  f.seed = b.seed;
  return f;
}

StoreView::StoreView(const ActivationStore& store, std::vector<std::size_t> rows)
    : store_(&store), rows_(std::move(rows)) {}

Matrix StoreView::matrix(int layer, Position p) const {
  const FloatMatrix& slab = store_->slab(layer, p);
  Matrix out(static_cast<Eigen::Index>(rows_.size()), slab.cols());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = slab.row(static_cast<Eigen::Index>(rows_[i])).cast<double>();
  }
  return out;
}

Labels StoreView::labels(LabelSet set) const {
  Labels out(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) out[static_cast<Eigen::Index>(i)] = meta(i).label(set);
  return out;
}

std::vector<std::string> StoreView::ids() const {
  std::vector<std::string> out;
  out.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) out.push_back(meta(i).example_id);
  return out;
}

StoreView StoreView::subset(const std::vector<std::size_t>& local_indices) const {
  std::vector<std::size_t> rows;
  rows.reserve(local_indices.size());
  for (std::size_t i : local_indices) rows.push_back(rows_.at(i));
  return StoreView(*store_, std::move(rows));
}

StoreView all_rows(const ActivationStore& store) {
  std::vector<std::size_t> rows(store.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return StoreView(store, std::move(rows));
}

StoreView select(const StoreView& view, const Filter& filter) {
  std::vector<std::size_t> matches;
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (filter.accepts(view.meta(i))) matches.push_back(view.rows()[i]);
  }
  if (matches.empty()) throw DataError("empty filter result (" + filter.describe() + ")");
  if (filter.max_n && *filter.max_n < matches.size()) {
    Rng rng = make_rng(filter.seed, 0x5e1ec7);
    std::shuffle(matches.begin(), matches.end(), rng);
    matches.resize(*filter.max_n);
    std::sort(matches.begin(), matches.end());
  }
  return StoreView(view.store(), std::move(matches));
}

StoreView select(const ActivationStore& store, const Filter& filter) { return select(all_rows(store), filter); }

}  // namespace quirky
