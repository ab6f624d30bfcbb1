#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mgimn/rtc.hpp"
#include "mgimn/trainer.hpp"

using namespace mgimn;

namespace {

Dataset two_class_corpus() {
  Dataset ds;
  ds.class_names = {"alpha", "beta"};
  ds.instances = {{"red apple pie", 0},
                  {"red apple cake", 0},
                  {"blue sky high", 1},
                  {"blue sea deep", 1}};
  ds.rebuild_class_index();
  return ds;
}

SentenceEncoder bag_of_chars_encoder() {
  // Deterministic stand-in for the trained encoder: 4 coarse counts.
  return [](const std::string& text) {
    std::vector<double> v(4, 0.0);
    for (char c : text) v[static_cast<unsigned char>(c) % 4] += 1.0;
    return v;
  };
}

}  // namespace

TEST_CASE("build_index covers every class once") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(1);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);
  CHECK(index.class_ids == std::vector<int>{0, 1});
  CHECK(index.support.size() == 2);
  CHECK(index.support[0].size() == 2);
}

TEST_CASE("bm25 document frequencies match manual counting") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(2);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);

  // Class documents: "red apple pie red apple cake" / "blue sky high blue sea deep".
  CHECK(index.doc_freq.at("red") == 1);
  CHECK(index.doc_freq.at("blue") == 1);
  CHECK(index.term_freq[0].at("red") == 2);
  CHECK(index.term_freq[0].at("apple") == 2);
  CHECK(index.term_freq[0].at("pie") == 1);
  CHECK(index.term_freq[1].at("blue") == 2);
  CHECK(index.doc_len[0] == 6);
  CHECK(index.doc_len[1] == 6);
  CHECK(index.avg_doc_len == doctest::Approx(6.0));
}

TEST_CASE("mean-vector index averages the class's support vectors") {
  Dataset ds;
  ds.class_names = {"only"};
  ds.instances = {{"aaaa", 0}, {"aaaa", 0}, {"aaaa", 0}};
  ds.rebuild_class_index();
  RtcConfig cfg;
  cfg.shots_k = 3;
  Rng rng(3);
  auto encode = bag_of_chars_encoder();
  RetrievalIndex index = build_index(ds, cfg, encode, rng);
  auto one = encode("aaaa");
  for (int64_t j = 0; j < 4; ++j)
    CHECK(index.class_vectors.at(0, j) == doctest::Approx(one[j]));
}

TEST_CASE("bm25 retrieval puts the class owning a unique token first") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.retrieve_n = 2;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(4);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);

  auto ranked = retrieve("sky story", index, cfg, nullptr);
  CHECK(ranked[0] == 1);  // only class 1 contains "sky"
  CHECK(bm25_score({"sky"}, index, 0, cfg) == 0.0);
  CHECK(bm25_score({"sky"}, index, 1, cfg) > 0.0);
}

TEST_CASE("bm25 score is zero iff no query term appears in any document") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.retrieve_n = 2;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(5);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);

  auto ranked = retrieve("unknown words only", index, cfg, nullptr);
  CHECK(ranked == std::vector<int>{0, 1});  // zero scores, ascending ids
  for (int64_t c = 0; c < 2; ++c) {
    CHECK(bm25_score({"unknown", "words"}, index, c, cfg) == 0.0);
    CHECK(bm25_score({"unknown", "red"}, index, c, cfg) ==
          (c == 0 ? doctest::Approx(bm25_score({"red"}, index, 0, cfg))
                  : doctest::Approx(0.0)));
  }
}

TEST_CASE("retrieve clamps oversized retrieve_n and is deterministic") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.retrieve_n = 10;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(6);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);
  auto a = retrieve("red", index, cfg, nullptr);
  auto b = retrieve("red", index, cfg, nullptr);
  CHECK(a.size() == 2);
  CHECK(a == b);
  CHECK(a[0] == 0);
}

TEST_CASE("retrieval recall is monotone in retrieve_n") {
  SynthSpec spec;
  spec.classes = 10;
  spec.per_class = 8;
  spec.vocab_size = 120;
  spec.noise = 0.4;
  spec.seed = 17;
  Dataset ds = gen_synth(spec);

  RtcConfig cfg;
  cfg.shots_k = 4;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(7);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);

  double prev = -1.0;
  for (int64_t n : {1, 2, 4, 8, 10}) {
    RtcConfig step = cfg;
    step.retrieve_n = n;
    int64_t hit = 0;
    for (const auto& inst : ds.instances) {
      auto ranked = retrieve(inst.text, index, step, nullptr);
      if (std::find(ranked.begin(), ranked.end(), inst.label) != ranked.end())
        ++hit;
    }
    double recall = static_cast<double>(hit) / ds.num_instances();
    CHECK(recall >= prev);
    prev = recall;
  }
  CHECK(prev == 1.0);  // retrieve_n == C returns everything
}

TEST_CASE("index manifest round trip preserves both modes") {
  Dataset ds = two_class_corpus();
  Rng rng(8);

  RtcConfig bm;
  bm.shots_k = 2;
  bm.mode = RetrieverMode::bm25;
  RetrievalIndex b_index = build_index(ds, bm, nullptr, rng);
  save_index(b_index, "/tmp/mgimn_bm25_index.json",
             "/tmp/mgimn_bm25_vectors.ckpt");
  RetrievalIndex b_back = load_index("/tmp/mgimn_bm25_index.json");
  CHECK(b_back.mode == RetrieverMode::bm25);
  CHECK(b_back.doc_freq == b_index.doc_freq);
  CHECK(b_back.term_freq == b_index.term_freq);
  CHECK(b_back.doc_len == b_index.doc_len);
  CHECK(b_back.support == b_index.support);

  RtcConfig mv;
  mv.shots_k = 2;
  Rng rng2(8);
  RetrievalIndex m_index = build_index(ds, mv, bag_of_chars_encoder(), rng2);
  save_index(m_index, "/tmp/mgimn_mean_index.json",
             "/tmp/mgimn_mean_vectors.ckpt");
  RetrievalIndex m_back = load_index("/tmp/mgimn_mean_index.json");
  CHECK(m_back.mode == RetrieverMode::mean_vector);
  CHECK(m_back.class_vectors.shape() == m_index.class_vectors.shape());
  for (int64_t i = 0; i < m_index.class_vectors.size(); ++i) {
    float f = static_cast<float>(m_index.class_vectors.data()[i]);
    CHECK(m_back.class_vectors.data()[i] == static_cast<double>(f));
  }
}

TEST_CASE("rtc_classify reduces to full classification at retrieve_n = C") {
  SynthSpec spec;
  spec.classes = 6;
  spec.per_class = 6;
  spec.vocab_size = 80;
  spec.noise = 0.2;
  spec.seed = 23;
  Dataset ds = gen_synth(spec);
  Vocabulary vocab = Vocabulary::build(ds.all_texts());

  RunConfig rc;
  rc.model = "mgimn";
  rc.hidden = 8;
  rc.enc_layers = 1;
  rc.enc_heads = 2;
  rc.max_seq_len = 16;
  rc.n_way = 2;
  rc.k_shot = 2;
  auto model = make_model(rc, vocab.size());

  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.retrieve_n = 6;
  SentenceEncoder encode = [&](const std::string& text) {
    NoGradGuard ng;
    auto v = model->sentence_vector(tokenize(text, vocab, rc.max_seq_len),
                                    ForwardCtx::eval());
    return std::vector<double>(v.data().begin(), v.data().end());
  };
  Rng rng(9);
  RetrievalIndex index = build_index(ds, cfg, encode, rng);

  for (int qi = 0; qi < 8; ++qi) {
    const auto& inst = ds.instances[qi * 4 % ds.num_instances()];
    int two_stage = rtc_classify(inst.text, ds, index, *model, vocab,
                                 rc.max_seq_len, cfg);
    // Full path: one episode over all classes in ascending order.
    EpisodeTokens ep;
    for (size_t c = 0; c < index.support.size(); ++c) {
      std::vector<TokenSeq> seqs;
      for (int64_t idx : index.support[c])
        seqs.push_back(tokenize(ds.instances[idx].text, vocab, rc.max_seq_len));
      ep.support.push_back(std::move(seqs));
    }
    ep.query.emplace_back(tokenize(inst.text, vocab, rc.max_seq_len), 0);
    NoGradGuard ng;
    auto logits = model->forward(ep, ForwardCtx::eval());
    CHECK(two_stage == index.class_ids[logits[0].argmax()]);
  }
}

TEST_CASE("rtc_classify with retrieve_n = 1 returns the retrieved class") {
  Dataset ds = two_class_corpus();
  RtcConfig cfg;
  cfg.shots_k = 2;
  cfg.retrieve_n = 1;
  cfg.mode = RetrieverMode::bm25;
  Rng rng(10);
  RetrievalIndex index = build_index(ds, cfg, nullptr, rng);
  Vocabulary vocab = Vocabulary::build(ds.all_texts());
  RunConfig rc;
  rc.hidden = 8;
  rc.enc_layers = 1;
  rc.enc_heads = 2;
  auto model = make_model(rc, vocab.size());
  int pred = rtc_classify("blue", ds, index, *model, vocab, rc.max_seq_len, cfg);
  CHECK(pred == 1);
}
