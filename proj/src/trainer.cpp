#include "mgimn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mgimn/baselines.hpp"
#include "mgimn/rtc.hpp"

namespace mgimn {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::unique_ptr<FewShotModel> make_model(const RunConfig& cfg,
                                         int64_t vocab_size) {
  cfg.validate();
  EncoderConfig enc{cfg.enc_layers, cfg.hidden, cfg.enc_heads, cfg.max_seq_len,
                    vocab_size};
  uint64_t seed = static_cast<uint64_t>(cfg.seed);
  if (cfg.model == "mgimn")
    return std::make_unique<MgimnModel>(MgimnConfig{enc, cfg.flags()}, seed);
  if (cfg.model == "proto") return std::make_unique<ProtoModel>(enc, seed);
  return std::make_unique<MatchingNetModel>(enc, seed);
}

LoadedModel load_model(const RunConfig& cfg, const std::string& ckpt_path,
                       const std::string& vocab_path) {
  LoadedModel out{nullptr, Vocabulary::load(vocab_path)};
  out.model = make_model(cfg, out.vocab.size());
  load_checkpoint(out.model->params(), ckpt_path);
  return out;
}

namespace {

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : out_(path) {
    if (!out_) fail(ErrorKind::io, "cannot open metrics file: " + path);
    out_ << "step,train_loss,eval_acc,setting,ms_per_query\n";
  }
  void train_row(int64_t step, double loss) {
    out_ << step << "," << format_double(loss) << ",,train,\n";
  }
  void eval_row(int64_t step, double acc, const std::string& setting,
                double ms = -1.0) {
    out_ << step << ",," << format_double(acc) << "," << setting << ",";
    if (ms >= 0.0) out_ << format_double(ms);
    out_ << "\n";
  }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

void require_k_feasible(const RunConfig& cfg, const Dataset& ds) {
  for (int64_t c = 0; c < ds.num_classes(); ++c)
    if (static_cast<int64_t>(ds.class_to_instances[c].size()) < cfg.k_shot + 1)
      fail(ErrorKind::data, "class '" + ds.class_names[c] +
                                "' has fewer than K+1 instances");
}

double clock_ms(const std::chrono::steady_clock::time_point& a,
                const std::chrono::steady_clock::time_point& b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

double episode_accuracy(const RunConfig& cfg, const Dataset& ds,
                        const FewShotModel& model, const Vocabulary& vocab,
                        const std::vector<int>& classes, int64_t episodes,
                        uint64_t rng_seed) {
  NoGradGuard ng;
  Rng rng(rng_seed);
  EpisodeSpec spec = cfg.episode_spec();
  int64_t correct = 0, total = 0;
  for (int64_t e = 0; e < episodes; ++e) {
    Episode ep = sample_episode(ds, classes, spec, rng);
    EpisodeTokens tokens = tokenize_episode(ep, ds, vocab, cfg.max_seq_len);
    auto logits = model.forward(tokens, ForwardCtx::eval());
    for (size_t q = 0; q < logits.size(); ++q) {
      if (logits[q].argmax() == tokens.query[q].second) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train_model(const RunConfig& cfg, const Dataset& ds,
                        const std::string& out_dir) {
  cfg.validate();
  require_k_feasible(cfg, ds);
  fs::create_directories(out_dir);

  Vocabulary vocab = Vocabulary::build(ds.all_texts(), cfg.min_count);
  TrainResult result;
  result.vocab_path = (fs::path(out_dir) / "vocab.txt").string();
  vocab.save(result.vocab_path);

  ClassSplit split = split_classes(ds, static_cast<uint64_t>(cfg.split_seed));
  save_split_manifest(split, ds, (fs::path(out_dir) / "split.json").string());

  auto model = make_model(cfg, vocab.size());
  std::cerr << "model " << cfg.model << " with "
            << model->params().param_count() << " parameters\n";

  result.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  result.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  MetricsWriter metrics(result.metrics_path);

  if (cfg.steps == 0) {
    save_checkpoint(model->params(), result.checkpoint_path);
    return result;
  }

  if (static_cast<int64_t>(split.train.size()) < cfg.n_way)
    fail(ErrorKind::sampling, "train split has fewer classes than N");
  bool can_validate = static_cast<int64_t>(split.val.size()) >= cfg.n_way;
  if (!can_validate)
    std::cerr << "warning: val split smaller than N, saving final weights\n";

  uint64_t seed = static_cast<uint64_t>(cfg.seed);
  Rng episode_rng(mix_seed(seed, 2));
  Rng dropout_rng(mix_seed(seed, 3));
  EpisodeSpec spec = cfg.episode_spec();

  double best_val = -1.0;
  std::vector<double> recent;
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    Episode ep = sample_episode(ds, split.train, spec, episode_rng);
    EpisodeTokens tokens = tokenize_episode(ep, ds, vocab, cfg.max_seq_len);
    ForwardCtx ctx = ForwardCtx::train(cfg.dropout, dropout_rng);
    Tensor loss = model->loss(tokens, ctx);
    loss.backward();
    adam_step(model->params(), cfg.lr);

    double l = loss.item();
    metrics.train_row(step, l);
    recent.push_back(l);
    if (static_cast<int64_t>(recent.size()) > 100)
      recent.erase(recent.begin());

    if (can_validate && (step % cfg.val_every == 0 || step == cfg.steps)) {
      double acc =
          episode_accuracy(cfg, ds, *model, vocab, split.val, cfg.val_episodes,
                           mix_seed(seed, 1000 + static_cast<uint64_t>(step)));
      metrics.eval_row(step, acc, "val");
      if (acc > best_val) {
        best_val = acc;
        save_checkpoint(model->params(), result.checkpoint_path);
      }
    }
  }
  if (!can_validate) save_checkpoint(model->params(), result.checkpoint_path);
  metrics.flush();

  result.best_val_accuracy = std::max(best_val, 0.0);
  double sum = 0.0;
  for (double l : recent) sum += l;
  result.final_loss = recent.empty() ? 0.0 : sum / recent.size();
  return result;
}

EvalSetting eval_setting_from_name(const std::string& name) {
  if (name == "fsl") return EvalSetting::fsl;
  if (name == "gfsl") return EvalSetting::gfsl;
  if (name == "rtc") return EvalSetting::rtc;
  fail(ErrorKind::config, "unknown eval setting: " + name);
}

namespace {

EvalResult eval_fsl(const RunConfig& cfg, const Dataset& ds,
                    const FewShotModel& model, const Vocabulary& vocab) {
  ClassSplit split = split_classes(ds, static_cast<uint64_t>(cfg.split_seed));
  EvalResult res;
  res.setting = "fsl" + std::to_string(cfg.n_way);
  res.episodes = cfg.eval_episodes;
  res.queries = cfg.eval_episodes * cfg.r_query;
  res.accuracy = episode_accuracy(
      cfg, ds, model, vocab, split.test, cfg.eval_episodes,
      mix_seed(static_cast<uint64_t>(cfg.seed), 4));
  return res;
}

EvalResult eval_gfsl(const RunConfig& cfg, const Dataset& ds,
                     const FewShotModel& model, const Vocabulary& vocab) {
  NoGradGuard ng;
  Rng rng(mix_seed(static_cast<uint64_t>(cfg.seed), 5));
  EvalResult res;
  res.setting = "gfsl";
  res.episodes = cfg.eval_episodes;
  int64_t correct = 0, total = 0;
  for (int64_t e = 0; e < cfg.eval_episodes; ++e) {
    Episode ep = sample_gfsl_episode(ds, cfg.k_shot, cfg.r_query, rng);
    EpisodeTokens tokens = tokenize_episode(ep, ds, vocab, cfg.max_seq_len);
    auto logits = model.forward(tokens, ForwardCtx::eval());
    for (size_t q = 0; q < logits.size(); ++q) {
      if (logits[q].argmax() == tokens.query[q].second) ++correct;
      ++total;
    }
  }
  res.queries = total;
  res.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return res;
}

int full_classify(const std::string& query, const Dataset& ds,
                  const RetrievalIndex& index, const FewShotModel& model,
                  const Vocabulary& vocab, int64_t max_seq_len) {
  EpisodeTokens ep;
  for (size_t c = 0; c < index.support.size(); ++c) {
    std::vector<TokenSeq> seqs;
    for (int64_t idx : index.support[c])
      seqs.push_back(tokenize(ds.instances[idx].text, vocab, max_seq_len));
    ep.support.push_back(std::move(seqs));
  }
  ep.query.emplace_back(tokenize(query, vocab, max_seq_len), 0);
  NoGradGuard ng;
  auto logits = model.forward(ep, ForwardCtx::eval());
  return index.class_ids[logits[0].argmax()];
}

EvalResult eval_rtc(const RunConfig& cfg, const Dataset& ds,
                    const FewShotModel& model, const Vocabulary& vocab,
                    const std::string& out_dir) {
  uint64_t seed = static_cast<uint64_t>(cfg.seed);
  RtcConfig rtc_cfg = cfg.rtc();

  SentenceEncoder encode = [&](const std::string& text) {
    NoGradGuard ng;
    auto v = model.sentence_vector(tokenize(text, vocab, cfg.max_seq_len),
                                   ForwardCtx::eval());
    return std::vector<double>(v.data().begin(), v.data().end());
  };

  Rng support_rng(mix_seed(seed, 6));
  RetrievalIndex index = build_index(ds, rtc_cfg, encode, support_rng);
  if (!out_dir.empty()) {
    save_index(index, (fs::path(out_dir) / "index.json").string(),
               (fs::path(out_dir) / "index_vectors.ckpt").string());
  }

  // Queries come from the instances the support pool left out.
  std::vector<int64_t> in_support;
  for (const auto& s : index.support)
    in_support.insert(in_support.end(), s.begin(), s.end());
  std::sort(in_support.begin(), in_support.end());
  std::vector<int64_t> eligible;
  for (int64_t i = 0; i < ds.num_instances(); ++i)
    if (!std::binary_search(in_support.begin(), in_support.end(), i))
      eligible.push_back(i);
  if (eligible.empty())
    fail(ErrorKind::data, "rtc evaluation has no held-out queries");

  Rng query_rng(mix_seed(seed, 7));
  int64_t n_queries =
      std::min<int64_t>(cfg.eval_queries, static_cast<int64_t>(eligible.size()));
  auto picks =
      query_rng.sample_indices(static_cast<int64_t>(eligible.size()), n_queries);

  EvalResult res;
  res.setting = "rtc";
  res.queries = n_queries;
  int64_t full_ok = 0, rtc_ok = 0, recall_ok = 0;
  for (int64_t qi = 0; qi < n_queries; ++qi) {
    const auto& inst = ds.instances[eligible[picks[qi]]];
    int gold = inst.label;
    auto retrieved = retrieve(inst.text, index, rtc_cfg, encode);
    if (std::find(retrieved.begin(), retrieved.end(), gold) != retrieved.end())
      ++recall_ok;
    int pred_rtc = rtc_classify(inst.text, ds, index, model, vocab,
                                cfg.max_seq_len, rtc_cfg);
    int pred_full =
        full_classify(inst.text, ds, index, model, vocab, cfg.max_seq_len);
    if (pred_rtc == gold) ++rtc_ok;
    if (pred_full == gold) ++full_ok;
  }
  res.accuracy = static_cast<double>(rtc_ok) / static_cast<double>(n_queries);
  res.full_accuracy =
      static_cast<double>(full_ok) / static_cast<double>(n_queries);
  res.stage1_recall =
      static_cast<double>(recall_ok) / static_cast<double>(n_queries);

  // Timing protocol: 10 warm-up queries, then 100 timed, single-threaded.
  auto timed_query = [&](int64_t i) -> const std::string& {
    return ds.instances[eligible[picks[i % n_queries]]].text;
  };
  for (int64_t i = 0; i < 10; ++i) {
    full_classify(timed_query(i), ds, index, model, vocab, cfg.max_seq_len);
    rtc_classify(timed_query(i), ds, index, model, vocab, cfg.max_seq_len,
                 rtc_cfg);
  }
  constexpr int64_t kTimed = 100;
  double full_ms = 0.0, retrieval_ms = 0.0, rtc_ms = 0.0;
  for (int64_t i = 0; i < kTimed; ++i) {
    const std::string& text = timed_query(i);
    auto t0 = std::chrono::steady_clock::now();
    full_classify(text, ds, index, model, vocab, cfg.max_seq_len);
    auto t1 = std::chrono::steady_clock::now();
    retrieve(text, index, rtc_cfg, encode);
    auto t2 = std::chrono::steady_clock::now();
    rtc_classify(text, ds, index, model, vocab, cfg.max_seq_len, rtc_cfg);
    auto t3 = std::chrono::steady_clock::now();
    full_ms += clock_ms(t0, t1);
    retrieval_ms += clock_ms(t1, t2);
    rtc_ms += clock_ms(t2, t3);  // end to end: internal retrieval + stage 2
  }
  res.ms_full = full_ms / kTimed;
  res.ms_rtc = rtc_ms / kTimed;
  res.ms_stage2 = std::max((rtc_ms - retrieval_ms) / kTimed, 0.0);
  if (res.ms_stage2 == 0.0) res.ms_stage2 = res.ms_rtc;
  return res;
}

}  // namespace

EvalResult run_eval(const RunConfig& cfg, const Dataset& ds,
                    const FewShotModel& model, const Vocabulary& vocab,
                    EvalSetting setting, const std::string& out_dir) {
  cfg.validate();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  EvalResult res;
  switch (setting) {
    case EvalSetting::fsl:
      res = eval_fsl(cfg, ds, model, vocab);
      break;
    case EvalSetting::gfsl:
      res = eval_gfsl(cfg, ds, model, vocab);
      break;
    case EvalSetting::rtc:
      res = eval_rtc(cfg, ds, model, vocab, out_dir);
      break;
  }
  if (!out_dir.empty()) {
    MetricsWriter metrics(
        (fs::path(out_dir) / ("eval_" + res.setting + ".csv")).string());
    if (setting == EvalSetting::rtc) {
      metrics.eval_row(0, res.accuracy, "rtc", res.ms_rtc);
      metrics.eval_row(0, res.full_accuracy, "rtc_full", res.ms_full);
    } else {
      metrics.eval_row(0, res.accuracy, res.setting);
    }
  }
  return res;
}

GradCheckReport run_grad_check(const RunConfig& cfg) {
  return run_grad_check(cfg, GradCheckOptions{});
}

GradCheckReport run_grad_check(const RunConfig& cfg,
                               const GradCheckOptions& opts) {
  cfg.validate();
  if (cfg.dropout != 0.0)
    fail(ErrorKind::config,
         "grad check requires dropout = 0 (deterministic loss)");
  if (cfg.hidden > 16 || cfg.n_way > 3 || cfg.k_shot > 2)
    fail(ErrorKind::config,
         "grad check requires a tiny config: hidden <= 16, N <= 3, K <= 2");

  uint64_t seed = static_cast<uint64_t>(cfg.seed);
  SynthSpec synth;
  synth.classes = std::max<int64_t>(cfg.n_way, 2);
  synth.per_class = cfg.k_shot + 2;
  synth.signature_size = 4;
  synth.vocab_size = synth.classes * 4 + 6;
  synth.noise = 0.25;
  synth.len_min = 4;
  synth.len_max = 6;
  synth.seed = mix_seed(seed, 21);
  Dataset ds = gen_synth(synth);
  Vocabulary vocab = Vocabulary::build(ds.all_texts(), 1);

  std::vector<int> all_classes;
  for (int64_t c = 0; c < ds.num_classes(); ++c)
    all_classes.push_back(static_cast<int>(c));

  GradCheckReport merged;
  merged.tolerance = opts.tolerance;
  merged.pass = true;
  for (const char* kind : {"mgimn", "proto", "matching"}) {
    RunConfig mcfg = cfg;
    mcfg.model = kind;
    auto model = make_model(mcfg, vocab.size());

    Rng ep_rng(mix_seed(seed, 22));
    Episode ep = sample_episode(ds, all_classes, cfg.episode_spec(), ep_rng);
    EpisodeTokens tokens = tokenize_episode(ep, ds, vocab, cfg.max_seq_len);

    auto loss_fn = [&]() { return model->loss(tokens, ForwardCtx::eval()); };
    GradCheckReport r = grad_check(loss_fn, model->params(), opts);
    if (!r.pass) merged.pass = false;
    if (!r.diagnostic.empty()) {
      if (!merged.diagnostic.empty()) merged.diagnostic += "; ";
      merged.diagnostic += std::string(kind) + ": " + r.diagnostic;
    }
    for (auto& row : r.rows)
      merged.rows.push_back({std::string(kind) + ":" + row.name, row.max_rel_error});
  }
  return merged;
}

SweepReport run_sweep(const RunConfig& cfg, const Dataset& ds,
                      const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  SweepReport report;
  for (int64_t s = 0; s < cfg.sweep_splits; ++s) {
    for (int64_t i = 0; i < cfg.sweep_inits; ++i) {
      RunConfig member = cfg;
      member.split_seed = cfg.split_seed + s;
      member.seed = cfg.seed + i;
      std::string run_dir =
          (fs::path(out_dir) / ("run_s" + std::to_string(member.split_seed) +
                                "_i" + std::to_string(member.seed)))
              .string();
      TrainResult tr = train_model(member, ds, run_dir);
      LoadedModel lm = load_model(member, tr.checkpoint_path, tr.vocab_path);
      EvalResult er =
          run_eval(member, ds, *lm.model, lm.vocab, EvalSetting::fsl, run_dir);
      report.members.push_back({member.split_seed, member.seed, er.accuracy});
    }
  }
  double sum = 0.0;
  for (const auto& m : report.members) sum += m.accuracy;
  report.mean = sum / static_cast<double>(report.members.size());
  double var = 0.0;
  for (const auto& m : report.members) {
    double d = m.accuracy - report.mean;
    var += d * d;
  }
  report.stddev =
      std::sqrt(var / static_cast<double>(report.members.size()));

  std::ofstream out((fs::path(out_dir) / "sweep.csv").string());
  if (!out) fail(ErrorKind::io, "cannot open sweep report");
  out << "split_seed,init_seed,accuracy\n";
  for (const auto& m : report.members)
    out << m.split_seed << "," << m.init_seed << ","
        << format_double(m.accuracy) << "\n";
  out << "aggregate,mean," << format_double(report.mean) << "\n";
  out << "aggregate,stddev," << format_double(report.stddev) << "\n";
  return report;
}

}  // namespace mgimn
