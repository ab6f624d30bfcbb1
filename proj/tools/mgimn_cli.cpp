// Command-line driver. Talks to the library exclusively through the C API in
// mgimn.h; exit codes: 0 success, 1 usage/config error, 2 data error,
// 3 check failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgimn.h"

namespace {

int exit_code_for(mgimn_status s) {
  switch (s) {
    case MGIMN_OK: return 0;
    case MGIMN_ERR_CONFIG:
    case MGIMN_ERR_SHAPE:
    case MGIMN_ERR_STATE: return 1;
    case MGIMN_ERR_DATA:
    case MGIMN_ERR_SAMPLING:
    case MGIMN_ERR_PARSE:
    case MGIMN_ERR_IO: return 2;
    case MGIMN_ERR_CHECK: return 3;
    default: return 1;
  }
}

int die(mgimn_status s) {
  std::fprintf(stderr, "error: %s\n", mgimn_last_error());
  return exit_code_for(s);
}

struct CommonOpts {
  std::string config_path;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string out_dir = "out";
  std::string setting;
  int64_t seed = -1;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value)");
  cmd->add_option("--dataset", opts.dataset_path, "JSON-lines dataset path");
  cmd->add_option("--checkpoint", opts.checkpoint_path, "checkpoint path");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--set", opts.overrides,
                  "config override as key=value (repeatable)");
}

struct ConfigHandle {
  mgimn_config* cfg = nullptr;
  ~ConfigHandle() { mgimn_config_free(cfg); }
};
struct DatasetHandle {
  mgimn_dataset* ds = nullptr;
  ~DatasetHandle() { mgimn_dataset_free(ds); }
};
struct ModelHandle {
  mgimn_model* model = nullptr;
  ~ModelHandle() { mgimn_model_free(model); }
};

mgimn_status build_config(const CommonOpts& opts, ConfigHandle& handle) {
  mgimn_status s = opts.config_path.empty()
                       ? mgimn_config_create(&handle.cfg)
                       : mgimn_config_load(opts.config_path.c_str(), &handle.cfg);
  if (s != MGIMN_OK) return s;
  if (opts.seed >= 0) {
    s = mgimn_config_set(handle.cfg, "seed",
                         std::to_string(opts.seed).c_str());
    if (s != MGIMN_OK) return s;
  }
  for (const auto& kv : opts.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return MGIMN_ERR_CONFIG;
    }
    s = mgimn_config_set(handle.cfg, kv.substr(0, eq).c_str(),
                         kv.substr(eq + 1).c_str());
    if (s != MGIMN_OK) return s;
  }
  return MGIMN_OK;
}

int64_t config_int(const ConfigHandle&, const CommonOpts& opts,
                   const char* key, int64_t fallback) {
  // The C API validates values; here we only need K for the load check, so
  // re-read it from the file/overrides with the same precedence.
  for (auto it = opts.overrides.rbegin(); it != opts.overrides.rend(); ++it) {
    auto eq = it->find('=');
    if (eq != std::string::npos && it->substr(0, eq) == key)
      return std::stoll(it->substr(eq + 1));
  }
  if (!opts.config_path.empty()) {
    FILE* f = std::fopen(opts.config_path.c_str(), "r");
    if (f) {
      char line[512];
      int64_t value = fallback;
      while (std::fgets(line, sizeof(line), f)) {
        std::string s(line);
        auto hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        auto eq = s.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string x) {
          size_t a = x.find_first_not_of(" \t\r\n");
          if (a == std::string::npos) return std::string();
          size_t b = x.find_last_not_of(" \t\r\n");
          return x.substr(a, b - a + 1);
        };
        if (trim(s.substr(0, eq)) == key) {
          try {
            value = std::stoll(trim(s.substr(eq + 1)));
          } catch (...) {
          }
        }
      }
      std::fclose(f);
      return value;
    }
  }
  return fallback;
}

int cmd_gen_synth(const CommonOpts& opts) {
  ConfigHandle cfg;
  if (auto s = build_config(opts, cfg)) return die(s);
  DatasetHandle ds;
  if (auto s = mgimn_dataset_generate(cfg.cfg, &ds.ds)) return die(s);
  std::string path = opts.dataset_path.empty()
                         ? opts.out_dir + "/synth.jsonl"
                         : opts.dataset_path;
  if (opts.dataset_path.empty())
    std::filesystem::create_directories(opts.out_dir);
  if (auto s = mgimn_dataset_save(ds.ds, path.c_str())) return die(s);
  std::printf("wrote %" PRId64 " instances over %" PRId64 " classes to %s\n",
              mgimn_dataset_num_instances(ds.ds),
              mgimn_dataset_num_classes(ds.ds), path.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  ConfigHandle cfg;
  if (auto s = build_config(opts, cfg)) return die(s);
  if (opts.dataset_path.empty()) {
    std::fprintf(stderr, "error: train requires --dataset\n");
    return 1;
  }
  int64_t k = config_int(cfg, opts, "k_shot", 5);
  DatasetHandle ds;
  if (auto s = mgimn_dataset_load(opts.dataset_path.c_str(), k + 1, &ds.ds))
    return die(s);
  ModelHandle model;
  if (auto s = mgimn_model_create(cfg.cfg, ds.ds, &model.model)) return die(s);
  std::printf("parameters: %" PRId64 "\n",
              mgimn_model_param_count(model.model));
  if (auto s = mgimn_train(model.model, ds.ds, cfg.cfg, opts.out_dir.c_str()))
    return die(s);
  std::printf("training complete; checkpoint at %s/model.ckpt\n",
              opts.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& setting) {
  ConfigHandle cfg;
  if (auto s = build_config(opts, cfg)) return die(s);
  if (opts.dataset_path.empty() || opts.checkpoint_path.empty()) {
    std::fprintf(stderr, "error: eval requires --dataset and --checkpoint\n");
    return 1;
  }
  DatasetHandle ds;
  if (auto s = mgimn_dataset_load(opts.dataset_path.c_str(), 0, &ds.ds))
    return die(s);
  std::string vocab_path =
      opts.checkpoint_path.substr(0, opts.checkpoint_path.find_last_of('/') + 1) +
      "vocab.txt";
  ModelHandle model;
  if (auto s = mgimn_model_load(cfg.cfg, opts.checkpoint_path.c_str(),
                                vocab_path.c_str(), &model.model))
    return die(s);
  mgimn_eval_result res{};
  if (auto s = mgimn_evaluate(model.model, ds.ds, cfg.cfg, setting.c_str(),
                              opts.out_dir.c_str(), &res))
    return die(s);
  if (setting == "rtc") {
    std::printf("rtc accuracy %.4f (full %.4f), stage-1 recall %.4f\n",
                res.accuracy, res.full_accuracy, res.stage1_recall);
    std::printf("ms/query: full %.3f, rtc %.3f, stage-2 %.3f\n", res.ms_full,
                res.ms_rtc, res.ms_stage2);
  } else {
    std::printf("%s accuracy %.4f over %" PRId64 " episodes\n",
                setting.c_str(), res.accuracy, res.episodes);
  }
  return 0;
}

int cmd_sweep(const CommonOpts& opts) {
  ConfigHandle cfg;
  if (auto s = build_config(opts, cfg)) return die(s);
  if (opts.dataset_path.empty()) {
    std::fprintf(stderr, "error: sweep requires --dataset\n");
    return 1;
  }
  int64_t k = config_int(cfg, opts, "k_shot", 5);
  DatasetHandle ds;
  if (auto s = mgimn_dataset_load(opts.dataset_path.c_str(), k + 1, &ds.ds))
    return die(s);
  mgimn_sweep_result res{};
  if (auto s = mgimn_sweep(ds.ds, cfg.cfg, opts.out_dir.c_str(), &res))
    return die(s);
  std::printf("sweep over %" PRId64 " members: mean %.4f, stddev %.4f\n",
              res.members, res.mean, res.stddev);
  return 0;
}

int cmd_grad_check(const CommonOpts& opts) {
  ConfigHandle cfg;
  if (opts.config_path.empty()) {
    // Built-in tiny deterministic configuration.
    if (auto s = mgimn_config_create(&cfg.cfg)) return die(s);
    const char* tiny[][2] = {{"hidden", "8"},   {"enc_layers", "2"},
                             {"enc_heads", "2"}, {"max_seq_len", "16"},
                             {"n_way", "2"},     {"k_shot", "2"},
                             {"r_query", "1"},   {"dropout", "0"}};
    for (auto& [k, v] : tiny)
      if (auto s = mgimn_config_set(cfg.cfg, k, v)) return die(s);
    CommonOpts rest = opts;
    rest.config_path.clear();
    for (const auto& kv : rest.overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      if (auto s = mgimn_config_set(cfg.cfg, kv.substr(0, eq).c_str(),
                                    kv.substr(eq + 1).c_str()))
        return die(s);
    }
    if (opts.seed >= 0)
      if (auto s = mgimn_config_set(cfg.cfg, "seed",
                                    std::to_string(opts.seed).c_str()))
        return die(s);
  } else {
    if (auto s = build_config(opts, cfg)) return die(s);
  }

  mgimn_report* report = nullptr;
  int passed = 0;
  if (auto s = mgimn_grad_check(cfg.cfg, &report, &passed)) return die(s);
  int64_t rows = mgimn_report_rows(report);
  double tol = mgimn_report_tolerance(report);
  for (int64_t i = 0; i < rows; ++i)
    std::printf("%-40s max_rel_err %.3e %s\n", mgimn_report_row_name(report, i),
                mgimn_report_row_error(report, i),
                mgimn_report_row_error(report, i) <= tol ? "ok" : "FAIL");
  const char* diag = mgimn_report_diagnostic(report);
  if (diag && diag[0]) std::printf("diagnostic: %s\n", diag);
  std::printf("grad check %s (tolerance %.1e, %" PRId64 " parameters)\n",
              passed ? "PASS" : "FAIL", tol, rows);
  mgimn_report_free(report);
  return passed ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot text classification: training, evaluation and "
               "retrieval-then-classify inference"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_fsl_opts, eval_gfsl_opts, eval_rtc_opts,
      sweep_opts, grad_opts, synth_opts, eval_opts;

  add_common(app.add_subcommand("train", "episode training"), train_opts);
  add_common(app.add_subcommand("eval-fsl", "N-way evaluation on unseen classes"),
             eval_fsl_opts);
  add_common(app.add_subcommand("eval-gfsl", "all-class evaluation"),
             eval_gfsl_opts);
  add_common(app.add_subcommand("eval-rtc",
                                "two-stage retrieval-then-classify evaluation"),
             eval_rtc_opts);
  auto* eval_cmd = app.add_subcommand("eval", "evaluation with --setting");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--setting", eval_opts.setting, "fsl | gfsl | rtc")
      ->required();
  add_common(app.add_subcommand("sweep", "split-seed x init-seed grid"),
             sweep_opts);
  add_common(app.add_subcommand("grad-check",
                                "finite-difference gradient verification"),
             grad_opts);
  add_common(app.add_subcommand("gen-synth", "write a synthetic dataset"),
             synth_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (app.got_subcommand("train")) return cmd_train(train_opts);
  if (app.got_subcommand("eval-fsl")) return cmd_eval(eval_fsl_opts, "fsl");
  if (app.got_subcommand("eval-gfsl")) return cmd_eval(eval_gfsl_opts, "gfsl");
  if (app.got_subcommand("eval-rtc")) return cmd_eval(eval_rtc_opts, "rtc");
  if (app.got_subcommand("eval")) return cmd_eval(eval_opts, eval_opts.setting);
  if (app.got_subcommand("sweep")) return cmd_sweep(sweep_opts);
  if (app.got_subcommand("grad-check")) return cmd_grad_check(grad_opts);
  if (app.got_subcommand("gen-synth")) return cmd_gen_synth(synth_opts);
  return 1;
}
