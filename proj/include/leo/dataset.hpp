#pragma once

// On-disk dataset layout:
//   DIR/scenes/<scan_id>.json   one scene per file
//   DIR/vocab.json              {"objects": [...], "predicates": [...]}
//   DIR/splits.json             {"train": [...], "val": [...], "test": [...]} scan ids

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "leo/error.hpp"
#include "leo/rng.hpp"
#include "leo/scene.hpp"

namespace leo {

struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& get(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ValidationError("unknown split '" + name + "' (train|val|test)");
  }
};

/// 70/10/20 partition of `ids` by a shuffle from the "split" stream; each part
/// keeps the original order of its members.
inline Splits make_splits(const std::vector<std::string>& ids, std::uint64_t seed) {
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = make_stream(seed, "split");
  shuffle(order, rng);
  const std::size_t n = ids.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  std::vector<int> part(n, 2);
  for (std::size_t r = 0; r < n; ++r) part[order[r]] = r < n_train ? 0 : (r < n_train + n_val ? 1 : 2);
  Splits s;
  for (std::size_t i = 0; i < n; ++i) (part[i] == 0 ? s.train : part[i] == 1 ? s.val : s.test).push_back(ids[i]);
  return s;
}

struct Dataset {
  Vocabulary vocab;
  std::vector<Scene> scenes;
  Splits splits;

  std::vector<Scene> split(const std::string& name) const {
    std::map<std::string, const Scene*> by_id;
    for (const auto& s : scenes) by_id[s.scan_id] = &s;
    std::vector<Scene> out;
    for (const auto& id : splits.get(name)) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("split '" + name + "' names unknown scan " + id);
      out.push_back(*it->second);
    }
    return out;
  }
};

inline void save_dataset(const std::string& dir, const Dataset& d) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  for (const auto& s : d.scenes) save_scene_json((fs::path(dir) / "scenes" / (s.scan_id + ".json")).string(), s);
  save_vocabulary((fs::path(dir) / "vocab.json").string(), d.vocab);
  nlohmann::json j = {{"train", d.splits.train}, {"val", d.splits.val}, {"test", d.splits.test}};
  write_text_file((fs::path(dir) / "splits.json").string(), dump_json(j));
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir);
  Dataset d;
  d.vocab = load_vocabulary((fs::path(dir) / "vocab.json").string());
  const auto limits = SceneLimits::from(d.vocab);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(dir) / "scenes"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) d.scenes.push_back(load_scene_json(f.string(), limits));
  const auto j = read_json_file((fs::path(dir) / "splits.json").string());
  try {
    d.splits.train = j.at("train").get<std::vector<std::string>>();
    d.splits.val = j.at("val").get<std::vector<std::string>>();
    d.splits.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("splits.json: ") + e.what());
  }
  return d;
}

}  // namespace leo
