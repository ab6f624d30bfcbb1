#include "mgimn.h"

#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "mgimn/trainer.hpp"

using namespace mgimn;

struct mgimn_config {
  std::map<std::string, std::string> kv;
  RunConfig parsed() const { return RunConfig::from_kv(kv); }
};

struct mgimn_dataset {
  Dataset ds;
};

struct mgimn_model {
  RunConfig cfg;
  Vocabulary vocab;
  std::unique_ptr<FewShotModel> model;
};

struct mgimn_report {
  GradCheckReport report;
};

namespace {

thread_local std::string g_last_error;

mgimn_status status_from(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return MGIMN_ERR_CONFIG;
    case ErrorKind::data: return MGIMN_ERR_DATA;
    case ErrorKind::shape: return MGIMN_ERR_SHAPE;
    case ErrorKind::state: return MGIMN_ERR_STATE;
    case ErrorKind::sampling: return MGIMN_ERR_SAMPLING;
    case ErrorKind::parse: return MGIMN_ERR_PARSE;
    case ErrorKind::io: return MGIMN_ERR_IO;
    case ErrorKind::check: return MGIMN_ERR_CHECK;
  }
  return MGIMN_ERR_UNKNOWN;
}

template <class Fn>
mgimn_status guarded(Fn&& fn) {
  try {
    fn();
    return MGIMN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_from(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MGIMN_ERR_UNKNOWN;
  }
}

mgimn_status require(bool ok, const char* msg) {
  if (ok) return MGIMN_OK;
  g_last_error = msg;
  return MGIMN_ERR_STATE;
}

}  // namespace

extern "C" {

const char* mgimn_version(void) { return "1.0.0"; }

const char* mgimn_last_error(void) { return g_last_error.c_str(); }

mgimn_status mgimn_config_create(mgimn_config** out) {
  if (auto s = require(out != nullptr, "null output pointer")) return s;
  *out = new mgimn_config();
  return MGIMN_OK;
}

mgimn_status mgimn_config_load(const char* path, mgimn_config** out) {
  if (auto s = require(out != nullptr && path != nullptr, "null argument"))
    return s;
  return guarded([&] {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, std::string("cannot open config: ") + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto kv = parse_config_text(ss.str());
    RunConfig::from_kv(kv);  // reject unknown keys and bad values up front
    auto cfg = std::make_unique<mgimn_config>();
    cfg->kv = std::move(kv);
    *out = cfg.release();
  });
}

mgimn_status mgimn_config_set(mgimn_config* cfg, const char* key,
                              const char* value) {
  if (auto s = require(cfg && key && value, "null argument")) return s;
  return guarded([&] {
    auto kv = cfg->kv;
    kv[key] = value;
    RunConfig::from_kv(kv);  // validate before committing
    cfg->kv = std::move(kv);
  });
}

void mgimn_config_free(mgimn_config* cfg) { delete cfg; }

mgimn_status mgimn_dataset_load(const char* path, int64_t min_per_class,
                                mgimn_dataset** out) {
  if (auto s = require(out && path, "null argument")) return s;
  return guarded([&] {
    auto ds = std::make_unique<mgimn_dataset>();
    ds->ds = load_dataset(path, min_per_class < 0 ? 0 : min_per_class);
    *out = ds.release();
  });
}

mgimn_status mgimn_dataset_generate(const mgimn_config* cfg,
                                    mgimn_dataset** out) {
  if (auto s = require(out && cfg, "null argument")) return s;
  return guarded([&] {
    auto ds = std::make_unique<mgimn_dataset>();
    ds->ds = gen_synth(cfg->parsed().synth);
    *out = ds.release();
  });
}

mgimn_status mgimn_dataset_save(const mgimn_dataset* ds, const char* path) {
  if (auto s = require(ds && path, "null argument")) return s;
  return guarded([&] { save_dataset(ds->ds, path); });
}

int64_t mgimn_dataset_num_classes(const mgimn_dataset* ds) {
  return ds ? ds->ds.num_classes() : 0;
}

int64_t mgimn_dataset_num_instances(const mgimn_dataset* ds) {
  return ds ? ds->ds.num_instances() : 0;
}

void mgimn_dataset_free(mgimn_dataset* ds) { delete ds; }

mgimn_status mgimn_model_create(const mgimn_config* cfg,
                                const mgimn_dataset* ds, mgimn_model** out) {
  if (auto s = require(cfg && ds && out, "null argument")) return s;
  return guarded([&] {
    auto m = std::make_unique<mgimn_model>();
    m->cfg = cfg->parsed();
    m->vocab = Vocabulary::build(ds->ds.all_texts(), m->cfg.min_count);
    m->model = make_model(m->cfg, m->vocab.size());
    *out = m.release();
  });
}

mgimn_status mgimn_model_load(const mgimn_config* cfg, const char* ckpt_path,
                              const char* vocab_path, mgimn_model** out) {
  if (auto s = require(cfg && ckpt_path && vocab_path && out, "null argument"))
    return s;
  return guarded([&] {
    auto m = std::make_unique<mgimn_model>();
    m->cfg = cfg->parsed();
    LoadedModel lm = load_model(m->cfg, ckpt_path, vocab_path);
    m->vocab = std::move(lm.vocab);
    m->model = std::move(lm.model);
    *out = m.release();
  });
}

mgimn_status mgimn_model_save(const mgimn_model* model, const char* ckpt_path) {
  if (auto s = require(model && ckpt_path, "null argument")) return s;
  return guarded(
      [&] { save_checkpoint(model->model->params(), ckpt_path); });
}

int64_t mgimn_model_param_count(const mgimn_model* model) {
  return model ? model->model->params().param_count() : 0;
}

void mgimn_model_free(mgimn_model* model) { delete model; }

mgimn_status mgimn_train(mgimn_model* model, const mgimn_dataset* ds,
                         const mgimn_config* cfg, const char* out_dir) {
  if (auto s = require(model && ds && cfg && out_dir, "null argument"))
    return s;
  return guarded([&] {
    RunConfig rc = cfg->parsed();
    TrainResult tr = train_model(rc, ds->ds, out_dir);
    // Leave the handle holding the trained (best-by-validation) weights.
    LoadedModel lm = load_model(rc, tr.checkpoint_path, tr.vocab_path);
    model->cfg = rc;
    model->vocab = std::move(lm.vocab);
    model->model = std::move(lm.model);
  });
}

mgimn_status mgimn_evaluate(const mgimn_model* model, const mgimn_dataset* ds,
                            const mgimn_config* cfg, const char* setting,
                            const char* out_dir, mgimn_eval_result* out) {
  if (auto s = require(model && ds && cfg && setting && out, "null argument"))
    return s;
  return guarded([&] {
    RunConfig rc = cfg->parsed();
    EvalResult r = run_eval(rc, ds->ds, *model->model, model->vocab,
                            eval_setting_from_name(setting),
                            out_dir ? out_dir : "");
    out->accuracy = r.accuracy;
    out->full_accuracy = r.full_accuracy;
    out->stage1_recall = r.stage1_recall;
    out->ms_full = r.ms_full;
    out->ms_rtc = r.ms_rtc;
    out->ms_stage2 = r.ms_stage2;
    out->episodes = r.episodes;
    out->queries = r.queries;
  });
}

mgimn_status mgimn_sweep(const mgimn_dataset* ds, const mgimn_config* cfg,
                         const char* out_dir, mgimn_sweep_result* out) {
  if (auto s = require(ds && cfg && out_dir && out, "null argument")) return s;
  return guarded([&] {
    SweepReport r = run_sweep(cfg->parsed(), ds->ds, out_dir);
    out->mean = r.mean;
    out->stddev = r.stddev;
    out->members = static_cast<int64_t>(r.members.size());
  });
}

mgimn_status mgimn_grad_check(const mgimn_config* cfg, mgimn_report** out,
                              int* passed) {
  if (auto s = require(cfg && out && passed, "null argument")) return s;
  return guarded([&] {
    auto rep = std::make_unique<mgimn_report>();
    rep->report = run_grad_check(cfg->parsed());
    *passed = rep->report.pass ? 1 : 0;
    *out = rep.release();
  });
}

int64_t mgimn_report_rows(const mgimn_report* report) {
  return report ? static_cast<int64_t>(report->report.rows.size()) : 0;
}

const char* mgimn_report_row_name(const mgimn_report* report, int64_t i) {
  if (!report || i < 0 || i >= mgimn_report_rows(report)) return nullptr;
  return report->report.rows[i].name.c_str();
}

double mgimn_report_row_error(const mgimn_report* report, int64_t i) {
  if (!report || i < 0 || i >= mgimn_report_rows(report)) return -1.0;
  return report->report.rows[i].max_rel_error;
}

double mgimn_report_tolerance(const mgimn_report* report) {
  return report ? report->report.tolerance : 0.0;
}

const char* mgimn_report_diagnostic(const mgimn_report* report) {
  return report ? report->report.diagnostic.c_str() : "";
}

void mgimn_report_free(mgimn_report* report) { delete report; }

}  // extern "C"
