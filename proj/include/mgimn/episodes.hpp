#pragma once

#include <string>
#include <vector>

#include "mgimn/common.hpp"

namespace mgimn {

struct Dataset {
  struct Instance {
    std::string text;
    int label = 0;
  };

  std::vector<Instance> instances;
  std::vector<std::string> class_names;                 // id -> original label
  std::vector<std::vector<int64_t>> class_to_instances;

  int64_t num_classes() const {
    return static_cast<int64_t>(class_names.size());
  }
  int64_t num_instances() const {
    return static_cast<int64_t>(instances.size());
  }
  std::vector<std::string> all_texts() const;
  void rebuild_class_index();
};

/// Parses JSON-lines records {"text": ..., "label": ...}; labels become
/// contiguous ids in first-appearance order. Classes with fewer than
/// `min_per_class` instances are rejected with a listing.
Dataset load_dataset(const std::string& path, int64_t min_per_class);
void save_dataset(const Dataset& ds, const std::string& path);

struct EpisodeSpec {
  int64_t n_way = 5;
  int64_t k_shot = 5;
  int64_t r_query = 5;
  void validate() const;
};

struct Episode {
  std::vector<std::vector<int64_t>> support;   // N x K instance indices
  std::vector<std::pair<int64_t, int>> query;  // (instance index, local label)
  std::vector<int> class_map;                  // local label -> dataset class
};

struct ClassSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;

  std::vector<int> seen() const { return train; }
  std::vector<int> unseen() const;
  std::vector<int> all() const;
};

/// Seeded shuffle then a 1:1:1 cut. A remainder of one extra class goes to
/// train; a remainder of two goes to train and test.
ClassSplit split_classes(const Dataset& ds, uint64_t seed);

void save_split_manifest(const ClassSplit& split, const Dataset& ds,
                         const std::string& path);

/// N classes without replacement from `allowed`, K supports per class, then
/// R queries drawn jointly from the remaining instances of those classes.
/// Query and support index sets are disjoint by construction.
Episode sample_episode(const Dataset& ds, const std::vector<int>& allowed,
                       const EpisodeSpec& spec, Rng& rng);

/// Episode over every class (ascending id), K supports each, R queries from
/// any class.
Episode sample_gfsl_episode(const Dataset& ds, int64_t k_shot, int64_t r_query,
                            Rng& rng);

struct SynthSpec {
  int64_t classes = 30;
  int64_t per_class = 40;
  int64_t vocab_size = 300;
  double noise = 0.3;
  int64_t signature_size = 8;
  int64_t len_min = 8;
  int64_t len_max = 12;
  uint64_t seed = 1;
  void validate() const;
};

/// Synthetic corpus: each class owns a disjoint signature token set; each
/// instance mixes signature tokens with a `noise` fraction of distractor
/// tokens shared across classes.
Dataset gen_synth(const SynthSpec& spec);

}  // namespace mgimn
