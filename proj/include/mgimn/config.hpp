#pragma once

#include <map>
#include <string>

#include "mgimn/episodes.hpp"
#include "mgimn/matching.hpp"
#include "mgimn/rtc.hpp"

namespace mgimn {

/// Everything a run needs, parsed from a flat `key = value` file. Every key
/// is optional; unknown keys are rejected.
struct RunConfig {
  std::string model = "mgimn";  // mgimn | proto | matching

  // model
  int64_t hidden = 128;
  int64_t enc_layers = 2;
  int64_t enc_heads = 2;
  int64_t max_seq_len = 32;
  double dropout = 0.1;
  bool use_instance = true;
  bool use_class = true;
  bool use_episode = true;

  // episodes
  int64_t n_way = 5;
  int64_t k_shot = 5;
  int64_t r_query = 5;

  // training
  double lr = 1e-4;  // paper-range default; any positive value accepted
  int64_t steps = 2000;
  int64_t seed = 42;
  int64_t split_seed = 1;
  int64_t val_every = 100;
  int64_t val_episodes = 100;
  int64_t min_count = 1;

  // evaluation
  int64_t eval_episodes = 500;
  int64_t eval_queries = 500;

  // retrieval-then-classify
  int64_t retrieve_n = 10;
  int64_t rtc_shots = 5;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  std::string retriever = "mean";  // mean | bm25

  // sweep grid
  int64_t sweep_splits = 5;
  int64_t sweep_inits = 3;

  // synthetic data generation
  SynthSpec synth;

  void validate() const;
  AblationFlags flags() const { return {use_instance, use_class, use_episode}; }
  RtcConfig rtc() const;
  EpisodeSpec episode_spec() const { return {n_way, k_shot, r_query}; }

  static RunConfig from_kv(const std::map<std::string, std::string>& kv);
  void apply_kv(const std::map<std::string, std::string>& kv);
};

/// `key = value` lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace mgimn
