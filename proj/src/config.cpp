#include "mgimn/config.hpp"

#include <fstream>
#include <sstream>

namespace mgimn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "': not an integer: " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "': not a number: " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::config, "config key '" + key + "': not a boolean: " + v);
}

}  // namespace

void RunConfig::validate() const {
  if (model != "mgimn" && model != "proto" && model != "matching")
    fail(ErrorKind::config, "model must be mgimn, proto or matching");
  if (hidden < 1 || enc_layers < 1 || enc_heads < 1 || max_seq_len < 2)
    fail(ErrorKind::config, "model dimensions must be positive");
  if (hidden % enc_heads != 0)
    fail(ErrorKind::config, "hidden must be divisible by enc_heads");
  if (dropout < 0.0 || dropout >= 1.0)
    fail(ErrorKind::config, "dropout must be in [0, 1)");
  episode_spec().validate();
  if (lr <= 0.0) fail(ErrorKind::config, "lr must be positive");
  if (steps < 0) fail(ErrorKind::config, "steps must be non-negative");
  if (val_every < 1 || val_episodes < 1)
    fail(ErrorKind::config, "validation cadence must be positive");
  if (eval_episodes < 1 || eval_queries < 1)
    fail(ErrorKind::config, "evaluation episode count must be >= 1");
  if (retrieve_n < 1 || rtc_shots < 1)
    fail(ErrorKind::config, "rtc settings must be positive");
  if (retriever != "mean" && retriever != "bm25")
    fail(ErrorKind::config, "retriever must be mean or bm25");
  if (sweep_splits < 1 || sweep_inits < 1)
    fail(ErrorKind::config, "sweep grid must be positive");
}

RtcConfig RunConfig::rtc() const {
  RtcConfig cfg;
  cfg.retrieve_n = retrieve_n;
  cfg.shots_k = rtc_shots;
  cfg.bm25_k1 = bm25_k1;
  cfg.bm25_b = bm25_b;
  cfg.mode = retriever == "bm25" ? RetrieverMode::bm25
                                 : RetrieverMode::mean_vector;
  return cfg;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  cfg.apply_kv(kv);
  return cfg;
}

void RunConfig::apply_kv(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "model") model = v;
    else if (key == "hidden") hidden = parse_int(key, v);
    else if (key == "enc_layers") enc_layers = parse_int(key, v);
    else if (key == "enc_heads") enc_heads = parse_int(key, v);
    else if (key == "max_seq_len") max_seq_len = parse_int(key, v);
    else if (key == "dropout") dropout = parse_double(key, v);
    else if (key == "use_instance") use_instance = parse_bool(key, v);
    else if (key == "use_class") use_class = parse_bool(key, v);
    else if (key == "use_episode") use_episode = parse_bool(key, v);
    else if (key == "n_way") n_way = parse_int(key, v);
    else if (key == "k_shot") k_shot = parse_int(key, v);
    else if (key == "r_query") r_query = parse_int(key, v);
    else if (key == "lr") lr = parse_double(key, v);
    else if (key == "steps") steps = parse_int(key, v);
    else if (key == "seed") seed = parse_int(key, v);
    else if (key == "split_seed") split_seed = parse_int(key, v);
    else if (key == "val_every") val_every = parse_int(key, v);
    else if (key == "val_episodes") val_episodes = parse_int(key, v);
    else if (key == "min_count") min_count = parse_int(key, v);
    else if (key == "eval_episodes") eval_episodes = parse_int(key, v);
    else if (key == "eval_queries") eval_queries = parse_int(key, v);
    else if (key == "retrieve_n") retrieve_n = parse_int(key, v);
    else if (key == "rtc_shots") rtc_shots = parse_int(key, v);
    else if (key == "bm25_k1") bm25_k1 = parse_double(key, v);
    else if (key == "bm25_b") bm25_b = parse_double(key, v);
    else if (key == "retriever") retriever = v;
    else if (key == "sweep_splits") sweep_splits = parse_int(key, v);
    else if (key == "sweep_inits") sweep_inits = parse_int(key, v);
    else if (key == "synth_classes") synth.classes = parse_int(key, v);
    else if (key == "synth_per_class") synth.per_class = parse_int(key, v);
    else if (key == "synth_vocab") synth.vocab_size = parse_int(key, v);
    else if (key == "synth_noise") synth.noise = parse_double(key, v);
    else if (key == "synth_sig") synth.signature_size = parse_int(key, v);
    else if (key == "synth_len_min") synth.len_min = parse_int(key, v);
    else if (key == "synth_len_max") synth.len_max = parse_int(key, v);
    else if (key == "synth_seed") synth.seed = parse_int(key, v);
    else fail(ErrorKind::config, "unknown config key: " + key);
  }
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config,
           "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::config,
           "config line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return RunConfig::from_kv(parse_config_text(ss.str()));
}

}  // namespace mgimn
