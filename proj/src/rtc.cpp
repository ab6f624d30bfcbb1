#include "mgimn/rtc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "mgimn/checkpoint.hpp"
#include "mgimn/vocab.hpp"

namespace mgimn {

using nlohmann::json;

RetrievalIndex build_index(const Dataset& ds, const RtcConfig& cfg,
                           const SentenceEncoder& encode, Rng& rng) {
  if (ds.num_classes() < 1) fail(ErrorKind::data, "build_index: no classes");
  RetrievalIndex index;
  index.mode = cfg.mode;

  for (int64_t c = 0; c < ds.num_classes(); ++c) {
    const auto& pool = ds.class_to_instances[c];
    if (pool.empty())
      fail(ErrorKind::data, "build_index: class '" + ds.class_names[c] +
                                "' has no instances");
    int64_t k = std::min<int64_t>(cfg.shots_k, static_cast<int64_t>(pool.size()));
    auto picks = rng.sample_indices(static_cast<int64_t>(pool.size()), k);
    std::vector<int64_t> chosen;
    for (int64_t p : picks) chosen.push_back(pool[p]);
    std::sort(chosen.begin(), chosen.end());
    index.class_ids.push_back(static_cast<int>(c));
    index.support.push_back(std::move(chosen));
  }

  if (cfg.mode == RetrieverMode::mean_vector) {
    if (!encode) fail(ErrorKind::state, "mean-vector index needs an encoder");
    std::vector<double> rows;
    int64_t dim = -1;
    for (size_t c = 0; c < index.support.size(); ++c) {
      std::vector<double> mean;
      for (int64_t idx : index.support[c]) {
        auto vec = encode(ds.instances[idx].text);
        if (mean.empty()) mean.assign(vec.size(), 0.0);
        for (size_t j = 0; j < vec.size(); ++j) mean[j] += vec[j];
      }
      for (auto& v : mean)
        v /= static_cast<double>(index.support[c].size());
      if (dim < 0) dim = static_cast<int64_t>(mean.size());
      rows.insert(rows.end(), mean.begin(), mean.end());
    }
    index.class_vectors = Tensor::from_data(
        {static_cast<int64_t>(index.support.size()), dim}, std::move(rows));
  } else {
    int64_t total_len = 0;
    for (size_t c = 0; c < index.support.size(); ++c) {
      std::map<std::string, int64_t> tf;
      int64_t len = 0;
      for (int64_t idx : index.support[c])
        for (const auto& tok : split_tokens(ds.instances[idx].text)) {
          tf[tok] += 1;
          ++len;
        }
      for (const auto& [tok, cnt] : tf) index.doc_freq[tok] += 1;
      index.term_freq.push_back(std::move(tf));
      index.doc_len.push_back(len);
      total_len += len;
    }
    index.avg_doc_len =
        static_cast<double>(total_len) / static_cast<double>(index.support.size());
  }
  return index;
}

double bm25_score(const std::vector<std::string>& query_terms,
                  const RetrievalIndex& index, int64_t class_pos,
                  const RtcConfig& cfg) {
  double n_docs = static_cast<double>(index.term_freq.size());
  const auto& tf = index.term_freq[class_pos];
  double dl = static_cast<double>(index.doc_len[class_pos]);
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto it = tf.find(term);
    if (it == tf.end()) continue;
    auto df_it = index.doc_freq.find(term);
    double df = df_it == index.doc_freq.end()
                    ? 0.0
                    : static_cast<double>(df_it->second);
    double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    double f = static_cast<double>(it->second);
    double norm = f + cfg.bm25_k1 *
                          (1.0 - cfg.bm25_b +
                           cfg.bm25_b * dl / index.avg_doc_len);
    score += idf * f * (cfg.bm25_k1 + 1.0) / norm;
  }
  return score;
}

std::vector<int> retrieve(const std::string& query, const RetrievalIndex& index,
                          const RtcConfig& cfg, const SentenceEncoder& encode) {
  int64_t c = static_cast<int64_t>(index.class_ids.size());
  if (c == 0) fail(ErrorKind::state, "retrieve: index is empty");
  int64_t n = cfg.retrieve_n;
  if (n < 1) fail(ErrorKind::config, "retrieve_n must be at least 1");
  if (n > c) {
    std::cerr << "warning: retrieve_n " << n << " clamped to " << c
              << " classes\n";
    n = c;
  }

  std::vector<double> scores(c, 0.0);
  if (index.mode == RetrieverMode::mean_vector) {
    if (!encode) fail(ErrorKind::state, "mean-vector retrieval needs an encoder");
    auto qv = encode(query);
    int64_t dim = index.class_vectors.cols();
    if (static_cast<int64_t>(qv.size()) != dim)
      fail(ErrorKind::shape, "retrieve: query vector width mismatch");
    double qn = 0.0;
    for (double v : qv) qn += v * v;
    qn = std::sqrt(qn);
    auto cv = index.class_vectors.data();
    for (int64_t i = 0; i < c; ++i) {
      double dot = 0.0, cn = 0.0;
      for (int64_t j = 0; j < dim; ++j) {
        dot += qv[j] * cv[i * dim + j];
        cn += cv[i * dim + j] * cv[i * dim + j];
      }
      cn = std::sqrt(cn);
      scores[i] = (qn == 0.0 || cn == 0.0) ? 0.0 : dot / (qn * cn);
    }
  } else {
    auto terms = split_tokens(query);
    for (int64_t i = 0; i < c; ++i) scores[i] = bm25_score(terms, index, i, cfg);
  }

  std::vector<int64_t> order(c);
  for (int64_t i = 0; i < c; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.class_ids[a] < index.class_ids[b];
  });
  std::vector<int> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) out.push_back(index.class_ids[order[i]]);
  return out;
}

int rtc_classify(const std::string& query, const Dataset& ds,
                 const RetrievalIndex& index, const FewShotModel& model,
                 const Vocabulary& vocab, int64_t max_seq_len,
                 const RtcConfig& cfg) {
  SentenceEncoder encode;
  if (index.mode == RetrieverMode::mean_vector)
    encode = [&](const std::string& text) {
      NoGradGuard ng;
      auto v = model.sentence_vector(tokenize(text, vocab, max_seq_len),
                                     ForwardCtx::eval());
      return std::vector<double>(v.data().begin(), v.data().end());
    };
  auto retrieved = retrieve(query, index, cfg, encode);
  if (retrieved.size() == 1) return retrieved[0];
  // Stage 2 uses ascending class id order so that retrieve_n == C rebuilds
  // exactly the episode the full path would.
  std::sort(retrieved.begin(), retrieved.end());

  EpisodeTokens ep;
  for (int cls : retrieved) {
    auto pos = std::lower_bound(index.class_ids.begin(), index.class_ids.end(),
                                cls) -
               index.class_ids.begin();
    std::vector<TokenSeq> seqs;
    for (int64_t idx : index.support[pos])
      seqs.push_back(tokenize(ds.instances[idx].text, vocab, max_seq_len));
    ep.support.push_back(std::move(seqs));
  }
  ep.query.emplace_back(tokenize(query, vocab, max_seq_len), 0);

  NoGradGuard ng;
  auto logits = model.forward(ep, ForwardCtx::eval());
  return retrieved[logits[0].argmax()];
}

void save_index(const RetrievalIndex& index, const std::string& manifest_path,
                const std::string& vectors_path) {
  json manifest;
  manifest["mode"] =
      index.mode == RetrieverMode::mean_vector ? "mean" : "bm25";
  manifest["class_ids"] = index.class_ids;
  manifest["support"] = index.support;
  if (index.mode == RetrieverMode::mean_vector) {
    ParamSet tensors;
    Tensor copy = Tensor::from_data(index.class_vectors.shape(),
                                    std::vector<double>(
                                        index.class_vectors.data().begin(),
                                        index.class_vectors.data().end()));
    tensors.add("class_mean_vectors", copy);
    save_checkpoint(tensors, vectors_path);
    manifest["vectors_file"] = vectors_path;
    manifest["dim"] = index.class_vectors.cols();
  } else {
    manifest["doc_len"] = index.doc_len;
    manifest["avg_doc_len"] = index.avg_doc_len;
    json tf = json::array();
    for (const auto& m : index.term_freq) tf.push_back(m);
    manifest["term_freq"] = tf;
    manifest["doc_freq"] = index.doc_freq;
  }
  std::ofstream out(manifest_path);
  if (!out) fail(ErrorKind::io, "cannot open index manifest: " + manifest_path);
  out << manifest.dump(2) << "\n";
}

RetrievalIndex load_index(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::io, "cannot open index manifest: " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("index manifest is not JSON: ") + e.what());
  }
  RetrievalIndex index;
  index.mode = manifest.at("mode").get<std::string>() == "mean"
                   ? RetrieverMode::mean_vector
                   : RetrieverMode::bm25;
  index.class_ids = manifest.at("class_ids").get<std::vector<int>>();
  index.support =
      manifest.at("support").get<std::vector<std::vector<int64_t>>>();
  if (index.mode == RetrieverMode::mean_vector) {
    int64_t c = static_cast<int64_t>(index.class_ids.size());
    int64_t dim = manifest.at("dim").get<int64_t>();
    ParamSet tensors;
    Tensor t = tensors.add("class_mean_vectors", Tensor::zeros({c, dim}));
    load_checkpoint(tensors, manifest.at("vectors_file").get<std::string>());
    index.class_vectors = t;
  } else {
    index.doc_len = manifest.at("doc_len").get<std::vector<int64_t>>();
    index.avg_doc_len = manifest.at("avg_doc_len").get<double>();
    for (const auto& m : manifest.at("term_freq"))
      index.term_freq.push_back(m.get<std::map<std::string, int64_t>>());
    index.doc_freq =
        manifest.at("doc_freq").get<std::map<std::string, int64_t>>();
  }
  return index;
}

}  // namespace mgimn
