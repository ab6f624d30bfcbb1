#pragma once

#include <memory>

#include "mgimn/checkpoint.hpp"
#include "mgimn/config.hpp"
#include "mgimn/gradcheck.hpp"
#include "mgimn/model.hpp"

namespace mgimn {

std::unique_ptr<FewShotModel> make_model(const RunConfig& cfg,
                                         int64_t vocab_size);

/// Builds the model shell for `cfg`, reads the vocabulary file, then fills
/// parameters from the checkpoint.
struct LoadedModel {
  std::unique_ptr<FewShotModel> model;
  Vocabulary vocab;
};
LoadedModel load_model(const RunConfig& cfg, const std::string& ckpt_path,
                       const std::string& vocab_path);

struct TrainResult {
  std::string checkpoint_path;
  std::string vocab_path;
  std::string metrics_path;
  double best_val_accuracy = 0.0;
  double final_loss = 0.0;  // mean loss over the last window of steps
};

/// Episode training with Adam, periodic validation on the val classes, and a
/// best-by-validation checkpoint. Writes vocab.txt, split.json, metrics.csv
/// and model.ckpt under out_dir. Deterministic given (config, seeds).
TrainResult train_model(const RunConfig& cfg, const Dataset& ds,
                        const std::string& out_dir);

enum class EvalSetting { fsl, gfsl, rtc };
EvalSetting eval_setting_from_name(const std::string& name);

struct EvalResult {
  std::string setting;
  double accuracy = 0.0;       // rtc: end-to-end two-stage accuracy
  double full_accuracy = 0.0;  // rtc only: full C-way path on the same queries
  double stage1_recall = 0.0;  // rtc only
  double ms_full = 0.0;        // rtc only: full C-way forward per query
  double ms_rtc = 0.0;         // rtc only: retrieve + reduced forward
  double ms_stage2 = 0.0;      // rtc only: reduced forward alone
  int64_t episodes = 0;
  int64_t queries = 0;
};

/// FSL samples N-way episodes from the test classes; GFSL samples episodes
/// over every class; RTC classifies held-out queries against a fixed,
/// seeded support pool through both the full and the two-stage path,
/// timing each (10 warm-up queries, 100 timed). Writes eval_<setting>.csv
/// (and the rtc index files) under out_dir when given.
EvalResult run_eval(const RunConfig& cfg, const Dataset& ds,
                    const FewShotModel& model, const Vocabulary& vocab,
                    EvalSetting setting, const std::string& out_dir);

/// Accuracy over `episodes` N-way episodes sampled from `classes`.
double episode_accuracy(const RunConfig& cfg, const Dataset& ds,
                        const FewShotModel& model, const Vocabulary& vocab,
                        const std::vector<int>& classes, int64_t episodes,
                        uint64_t rng_seed);

/// Finite-difference gradient verification of the matcher and both reference
/// models on a fixed tiny episode; rows are prefixed with the model name.
/// Requires a tiny config (hidden <= 16, n_way <= 3, k_shot <= 2) with
/// dropout disabled.
GradCheckReport run_grad_check(const RunConfig& cfg);
GradCheckReport run_grad_check(const RunConfig& cfg,
                               const GradCheckOptions& opts);

struct SweepReport {
  struct Member {
    int64_t split_seed = 0;
    int64_t init_seed = 0;
    double accuracy = 0.0;
  };
  std::vector<Member> members;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Full grid of sweep_splits class-split seeds by sweep_inits init seeds;
/// each member trains from scratch and is scored with the FSL protocol.
SweepReport run_sweep(const RunConfig& cfg, const Dataset& ds,
                      const std::string& out_dir);

std::string format_double(double v);  // shortest round-trippable form

}  // namespace mgimn
