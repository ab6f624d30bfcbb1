#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mgimn/trainer.hpp"

using namespace mgimn;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model = "mgimn";
  cfg.hidden = 8;
  cfg.enc_layers = 1;
  cfg.enc_heads = 2;
  cfg.max_seq_len = 16;
  cfg.dropout = 0.1;
  cfg.n_way = 2;
  cfg.k_shot = 2;
  cfg.r_query = 2;
  cfg.lr = 1e-3;
  cfg.steps = 6;
  cfg.seed = 3;
  cfg.split_seed = 2;
  cfg.val_every = 3;
  cfg.val_episodes = 2;
  cfg.eval_episodes = 4;
  cfg.eval_queries = 6;
  cfg.retrieve_n = 2;
  cfg.rtc_shots = 2;
  return cfg;
}

Dataset tiny_dataset(uint64_t seed = 31) {
  SynthSpec spec;
  spec.classes = 6;
  spec.per_class = 6;
  spec.vocab_size = 70;
  spec.noise = 0.2;
  spec.seed = seed;
  return gen_synth(spec);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& tag) {
  std::string dir = "/tmp/mgimn_trainer_" + tag;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config file parsing and validation") {
  auto kv = parse_config_text(
      "model = proto\nhidden= 16\n# comment\n  lr =0.001  \n\nseed = 9\n");
  RunConfig cfg = RunConfig::from_kv(kv);
  CHECK(cfg.model == "proto");
  CHECK(cfg.hidden == 16);
  CHECK(cfg.lr == doctest::Approx(0.001));
  CHECK(cfg.seed == 9);

  CHECK_THROWS_AS(RunConfig::from_kv({{"nonsense", "1"}}), Error);
  CHECK_THROWS_AS(RunConfig::from_kv({{"hidden", "abc"}}), Error);
  CHECK_THROWS_AS(RunConfig::from_kv({{"dropout", "1.5"}}), Error);
  CHECK_THROWS_AS(parse_config_text("this line has no equals"), Error);
}

TEST_CASE("train with zero steps emits the initialized checkpoint only") {
  RunConfig cfg = tiny_run_config();
  cfg.steps = 0;
  Dataset ds = tiny_dataset();
  std::string dir = fresh_dir("zero");
  TrainResult tr = train_model(cfg, ds, dir);
  CHECK(fs::exists(tr.checkpoint_path));
  CHECK(fs::exists(tr.vocab_path));
  std::string metrics = read_file(tr.metrics_path);
  CHECK(metrics == "step,train_loss,eval_acc,setting,ms_per_query\n");

  LoadedModel lm = load_model(cfg, tr.checkpoint_path, tr.vocab_path);
  auto fresh = make_model(cfg, lm.vocab.size());
  CHECK(lm.model->params().param_count() == fresh->params().param_count());
}

TEST_CASE("training metrics are byte-identical across reruns") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  std::string dir_a = fresh_dir("det_a");
  std::string dir_b = fresh_dir("det_b");
  TrainResult a = train_model(cfg, ds, dir_a);
  TrainResult b = train_model(cfg, ds, dir_b);
  CHECK(read_file(a.metrics_path) == read_file(b.metrics_path));
  CHECK(read_file(a.metrics_path).find(",train,") != std::string::npos);
  CHECK(read_file(dir_a + "/split.json") == read_file(dir_b + "/split.json"));
  // Checkpoints byte-identical too.
  CHECK(read_file(a.checkpoint_path) == read_file(b.checkpoint_path));
}

TEST_CASE("different seeds give different training trajectories") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  TrainResult a = train_model(cfg, ds, fresh_dir("seed_a"));
  cfg.seed += 1;
  TrainResult b = train_model(cfg, ds, fresh_dir("seed_b"));
  CHECK(read_file(a.metrics_path) != read_file(b.metrics_path));
}

TEST_CASE("checkpoint round trip reproduces evaluation metrics exactly") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  TrainResult tr = train_model(cfg, ds, fresh_dir("roundtrip"));

  LoadedModel first = load_model(cfg, tr.checkpoint_path, tr.vocab_path);
  EvalResult ev1 =
      run_eval(cfg, ds, *first.model, first.vocab, EvalSetting::fsl, "");

  // Save the loaded model again, reload, and re-evaluate.
  std::string second_path = "/tmp/mgimn_trainer_roundtrip/model2.ckpt";
  save_checkpoint(first.model->params(), second_path);
  LoadedModel second = load_model(cfg, second_path, tr.vocab_path);
  EvalResult ev2 =
      run_eval(cfg, ds, *second.model, second.vocab, EvalSetting::fsl, "");
  CHECK(ev1.accuracy == ev2.accuracy);

  EvalResult g1 =
      run_eval(cfg, ds, *first.model, first.vocab, EvalSetting::gfsl, "");
  EvalResult g2 =
      run_eval(cfg, ds, *second.model, second.vocab, EvalSetting::gfsl, "");
  CHECK(g1.accuracy == g2.accuracy);
}

TEST_CASE("eval settings are reproducible under a fixed seed") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  TrainResult tr = train_model(cfg, ds, fresh_dir("evals"));
  LoadedModel lm = load_model(cfg, tr.checkpoint_path, tr.vocab_path);

  for (EvalSetting setting :
       {EvalSetting::fsl, EvalSetting::gfsl, EvalSetting::rtc}) {
    EvalResult a = run_eval(cfg, ds, *lm.model, lm.vocab, setting, "");
    EvalResult b = run_eval(cfg, ds, *lm.model, lm.vocab, setting, "");
    CHECK(a.accuracy == b.accuracy);
    if (setting == EvalSetting::rtc) {
      CHECK(a.full_accuracy == b.full_accuracy);
      CHECK(a.stage1_recall == b.stage1_recall);
      CHECK(a.ms_rtc > 0.0);
      CHECK(a.ms_full > 0.0);
    }
  }
}

TEST_CASE("rtc eval with retrieve_n = C matches the full path exactly") {
  RunConfig cfg = tiny_run_config();
  cfg.retrieve_n = 6;  // equals the class count
  Dataset ds = tiny_dataset();
  TrainResult tr = train_model(cfg, ds, fresh_dir("rtc_full"));
  LoadedModel lm = load_model(cfg, tr.checkpoint_path, tr.vocab_path);
  EvalResult ev = run_eval(cfg, ds, *lm.model, lm.vocab, EvalSetting::rtc, "");
  CHECK(ev.accuracy == ev.full_accuracy);
  CHECK(ev.stage1_recall == 1.0);
}

TEST_CASE("ablation flags change the registered parameter count") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  Vocabulary vocab = Vocabulary::build(ds.all_texts());

  auto full = make_model(cfg, vocab.size());
  RunConfig off = cfg;
  off.use_instance = off.use_class = off.use_episode = false;
  auto reduced = make_model(off, vocab.size());
  CHECK(reduced->params().param_count() < full->params().param_count());
}

TEST_CASE("grad check command requires a tiny deterministic config") {
  RunConfig cfg = tiny_run_config();
  cfg.dropout = 0.1;
  CHECK_THROWS_AS(run_grad_check(cfg), Error);
  cfg.dropout = 0.0;
  cfg.hidden = 64;
  CHECK_THROWS_AS(run_grad_check(cfg), Error);
}

TEST_CASE("grad check passes on the tiny config and lists params once") {
  RunConfig cfg;
  cfg.hidden = 8;
  cfg.enc_layers = 1;
  cfg.enc_heads = 2;
  cfg.max_seq_len = 16;
  cfg.dropout = 0.0;
  cfg.n_way = 2;
  cfg.k_shot = 2;
  cfg.r_query = 1;
  cfg.seed = 5;
  GradCheckReport report = run_grad_check(cfg);
  CHECK(report.pass);
  CHECK(report.worst_error() <= 1e-4);

  std::set<std::string> names;
  for (const auto& row : report.rows) {
    CHECK(names.insert(row.name).second);  // unique
  }
  // All three model kinds are covered.
  CHECK(names.count("mgimn:match.align_proj.w") == 1);
  CHECK(names.count("proto:enc.tok_emb") == 1);
  CHECK(names.count("matching:enc.tok_emb") == 1);
}

TEST_CASE("grad check flags an injected gradient bug") {
  RunConfig cfg;
  cfg.hidden = 8;
  cfg.enc_layers = 1;
  cfg.enc_heads = 2;
  cfg.max_seq_len = 16;
  cfg.dropout = 0.0;
  cfg.n_way = 2;
  cfg.k_shot = 1;
  cfg.r_query = 1;
  GradCheckOptions opts;
  opts.grad_tamper = [](ParamSet& ps) {
    auto* node = ps.entries().front().value.node().get();
    for (auto& g : node->grad) g = -g - 0.5;
  };
  GradCheckReport report = run_grad_check(cfg, opts);
  CHECK_FALSE(report.pass);
}

TEST_CASE("degenerate 1x1 sweep equals a single run") {
  RunConfig cfg = tiny_run_config();
  cfg.model = "proto";  // cheap member runs
  cfg.steps = 4;
  cfg.sweep_splits = 1;
  cfg.sweep_inits = 1;
  Dataset ds = tiny_dataset();
  SweepReport sweep = run_sweep(cfg, ds, fresh_dir("sweep1"));
  CHECK(sweep.members.size() == 1);
  CHECK(sweep.mean == sweep.members[0].accuracy);
  CHECK(sweep.stddev == 0.0);

  TrainResult tr = train_model(cfg, ds, fresh_dir("sweep1_single"));
  LoadedModel lm = load_model(cfg, tr.checkpoint_path, tr.vocab_path);
  EvalResult ev = run_eval(cfg, ds, *lm.model, lm.vocab, EvalSetting::fsl, "");
  CHECK(sweep.members[0].accuracy == ev.accuracy);
}

TEST_CASE("sweep aggregates are the arithmetic mean of member accuracies") {
  RunConfig cfg = tiny_run_config();
  cfg.model = "proto";
  cfg.steps = 2;
  cfg.sweep_splits = 2;
  cfg.sweep_inits = 2;
  Dataset ds = tiny_dataset();
  std::string dir = fresh_dir("sweep4");
  SweepReport sweep = run_sweep(cfg, ds, dir);
  CHECK(sweep.members.size() == 4);
  double sum = 0.0;
  for (const auto& m : sweep.members) sum += m.accuracy;
  CHECK(sweep.mean == doctest::Approx(sum / 4.0).epsilon(1e-15));
  CHECK(fs::exists(dir + "/sweep.csv"));
  std::string csv = read_file(dir + "/sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 4 + 2
}

TEST_CASE("eval metrics files strip to identical content across reruns") {
  RunConfig cfg = tiny_run_config();
  Dataset ds = tiny_dataset();
  TrainResult tr = train_model(cfg, ds, fresh_dir("emetrics"));
  LoadedModel lm = load_model(cfg, tr.checkpoint_path, tr.vocab_path);

  std::string dir_a = fresh_dir("emetrics_a");
  std::string dir_b = fresh_dir("emetrics_b");
  run_eval(cfg, ds, *lm.model, lm.vocab, EvalSetting::rtc, dir_a);
  run_eval(cfg, ds, *lm.model, lm.vocab, EvalSetting::rtc, dir_b);

  auto strip_timing = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
      auto pos = line.rfind(',');
      out += line.substr(0, pos) + "\n";
    }
    return out;
  };
  CHECK(strip_timing(read_file(dir_a + "/eval_rtc.csv")) ==
        strip_timing(read_file(dir_b + "/eval_rtc.csv")));
  CHECK(fs::exists(dir_a + "/index.json"));
  CHECK(fs::exists(dir_a + "/index_vectors.ckpt"));
}
