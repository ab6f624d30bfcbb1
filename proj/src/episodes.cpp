#include "mgimn/episodes.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace mgimn {

using nlohmann::json;

std::vector<std::string> Dataset::all_texts() const {
  std::vector<std::string> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.text);
  return out;
}

void Dataset::rebuild_class_index() {
  class_to_instances.assign(class_names.size(), {});
  for (int64_t i = 0; i < num_instances(); ++i)
    class_to_instances[instances[i].label].push_back(i);
}

Dataset load_dataset(const std::string& path, int64_t min_per_class) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open dataset: " + path);

  Dataset ds;
  std::unordered_map<std::string, int> label_ids;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "dataset line " + std::to_string(line_no) +
                                 ": " + e.what());
    }
    if (!rec.contains("text") || !rec.contains("label") ||
        !rec["text"].is_string() || !rec["label"].is_string())
      fail(ErrorKind::parse, "dataset line " + std::to_string(line_no) +
                                 ": expected string fields 'text' and 'label'");
    std::string label = rec["label"].get<std::string>();
    auto [it, inserted] =
        label_ids.emplace(label, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(label);
    ds.instances.push_back({rec["text"].get<std::string>(), it->second});
  }
  if (ds.instances.empty()) fail(ErrorKind::data, "dataset is empty: " + path);
  ds.rebuild_class_index();

  std::vector<std::string> undersized;
  for (int64_t c = 0; c < ds.num_classes(); ++c)
    if (static_cast<int64_t>(ds.class_to_instances[c].size()) < min_per_class)
      undersized.push_back(ds.class_names[c] + " (" +
                           std::to_string(ds.class_to_instances[c].size()) +
                           ")");
  if (!undersized.empty()) {
    std::ostringstream os;
    os << "classes with fewer than " << min_per_class << " instances:";
    for (const auto& s : undersized) os << " " << s;
    fail(ErrorKind::data, os.str());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open dataset for writing: " + path);
  for (const auto& inst : ds.instances) {
    json rec = {{"text", inst.text}, {"label", ds.class_names[inst.label]}};
    out << rec.dump() << "\n";
  }
  if (!out) fail(ErrorKind::io, "failed writing dataset: " + path);
}

void EpisodeSpec::validate() const {
  if (n_way < 2 || k_shot < 1 || r_query < 1)
    fail(ErrorKind::config, "episode spec requires N >= 2, K >= 1, R >= 1");
}

std::vector<int> ClassSplit::unseen() const {
  std::vector<int> out = val;
  out.insert(out.end(), test.begin(), test.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> ClassSplit::all() const {
  std::vector<int> out = train;
  out.insert(out.end(), val.begin(), val.end());
  out.insert(out.end(), test.begin(), test.end());
  std::sort(out.begin(), out.end());
  return out;
}

ClassSplit split_classes(const Dataset& ds, uint64_t seed) {
  int64_t c = ds.num_classes();
  if (c < 3)
    fail(ErrorKind::config, "split_classes: need at least 3 classes");
  std::vector<int> ids(c);
  for (int64_t i = 0; i < c; ++i) ids[i] = static_cast<int>(i);
  Rng rng(mix_seed(seed, 11));
  rng.shuffle(ids);

  int64_t base = c / 3;
  int64_t rem = c % 3;
  int64_t n_train = base + (rem >= 1 ? 1 : 0);
  int64_t n_test = base + (rem == 2 ? 1 : 0);
  int64_t n_val = c - n_train - n_test;

  ClassSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void save_split_manifest(const ClassSplit& split, const Dataset& ds,
                         const std::string& path) {
  auto names = [&](const std::vector<int>& ids) {
    json arr = json::array();
    for (int id : ids) arr.push_back(ds.class_names[id]);
    return arr;
  };
  json manifest = {{"train", names(split.train)},
                   {"val", names(split.val)},
                   {"test", names(split.test)}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open split manifest: " + path);
  out << manifest.dump(2) << "\n";
}

namespace {

Episode sample_from_classes(const Dataset& ds, std::vector<int> classes,
                            int64_t k_shot, int64_t r_query, Rng& rng) {
  Episode ep;
  ep.class_map = std::move(classes);
  int64_t n_way = static_cast<int64_t>(ep.class_map.size());

  std::set<int64_t> support_set;
  ep.support.resize(n_way);
  for (int64_t n = 0; n < n_way; ++n) {
    const auto& pool = ds.class_to_instances[ep.class_map[n]];
    if (static_cast<int64_t>(pool.size()) < k_shot + 1)
      fail(ErrorKind::sampling,
           "class '" + ds.class_names[ep.class_map[n]] +
               "' has too few instances for K-shot sampling");
    auto picks = rng.sample_indices(static_cast<int64_t>(pool.size()), k_shot);
    for (int64_t p : picks) {
      ep.support[n].push_back(pool[p]);
      support_set.insert(pool[p]);
    }
  }

  std::vector<std::pair<int64_t, int>> remaining;
  for (int64_t n = 0; n < n_way; ++n)
    for (int64_t idx : ds.class_to_instances[ep.class_map[n]])
      if (!support_set.count(idx)) remaining.emplace_back(idx, static_cast<int>(n));
  if (static_cast<int64_t>(remaining.size()) < r_query)
    fail(ErrorKind::sampling, "not enough non-support instances for queries");
  auto qpicks =
      rng.sample_indices(static_cast<int64_t>(remaining.size()), r_query);
  for (int64_t p : qpicks) ep.query.push_back(remaining[p]);
  return ep;
}

}  // namespace

Episode sample_episode(const Dataset& ds, const std::vector<int>& allowed,
                       const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  if (static_cast<int64_t>(allowed.size()) < spec.n_way)
    fail(ErrorKind::sampling, "fewer allowed classes than N");
  auto picks =
      rng.sample_indices(static_cast<int64_t>(allowed.size()), spec.n_way);
  std::vector<int> classes;
  classes.reserve(spec.n_way);
  for (int64_t p : picks) classes.push_back(allowed[p]);
  return sample_from_classes(ds, std::move(classes), spec.k_shot, spec.r_query,
                             rng);
}

Episode sample_gfsl_episode(const Dataset& ds, int64_t k_shot, int64_t r_query,
                            Rng& rng) {
  if (k_shot < 1 || r_query < 1)
    fail(ErrorKind::config, "gfsl episode requires K >= 1, R >= 1");
  std::vector<int> classes(ds.num_classes());
  for (int64_t i = 0; i < ds.num_classes(); ++i)
    classes[i] = static_cast<int>(i);
  return sample_from_classes(ds, std::move(classes), k_shot, r_query, rng);
}

void SynthSpec::validate() const {
  if (classes < 1 || per_class < 1 || signature_size < 1)
    fail(ErrorKind::config, "gen_synth: counts must be positive");
  if (noise < 0.0 || noise > 1.0)
    fail(ErrorKind::config, "gen_synth: noise must be in [0, 1]");
  if (vocab_size < classes * signature_size)
    fail(ErrorKind::config,
         "gen_synth: vocabulary too small for disjoint class signatures");
  if (noise > 0.0 && vocab_size == classes * signature_size)
    fail(ErrorKind::config, "gen_synth: noise > 0 needs distractor tokens");
  if (len_min < 1 || len_max < len_min)
    fail(ErrorKind::config, "gen_synth: invalid length range");
}

Dataset gen_synth(const SynthSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 12));
  Dataset ds;
  int64_t n_distractors = spec.vocab_size - spec.classes * spec.signature_size;
  for (int64_t c = 0; c < spec.classes; ++c) {
    std::ostringstream name;
    name << "class_" << c;
    ds.class_names.push_back(name.str());
    for (int64_t i = 0; i < spec.per_class; ++i) {
      int64_t len =
          spec.len_min + rng.uniform_int(spec.len_max - spec.len_min + 1);
      std::ostringstream text;
      for (int64_t t = 0; t < len; ++t) {
        int64_t tok;
        if (n_distractors > 0 && rng.uniform() < spec.noise) {
          tok = spec.classes * spec.signature_size +
                rng.uniform_int(n_distractors);
        } else {
          tok = c * spec.signature_size + rng.uniform_int(spec.signature_size);
        }
        if (t > 0) text << " ";
        text << "tok" << tok;
      }
      ds.instances.push_back({text.str(), static_cast<int>(c)});
    }
  }
  ds.rebuild_class_index();
  return ds;
}

}  // namespace mgimn
