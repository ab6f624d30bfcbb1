#include <doctest.h>

#include <cmath>

#include "mgimn/baselines.hpp"

using namespace mgimn;

namespace {

EncoderConfig tiny_config(int64_t vocab_size) {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.max_seq_len = 10;
  cfg.vocab_size = vocab_size;
  return cfg;
}

TokenSeq seq_of(std::vector<int> ids) {
  TokenSeq s;
  s.ids = std::move(ids);
  s.ids.insert(s.ids.begin(), Vocabulary::kCls);
  s.length = static_cast<int64_t>(s.ids.size());
  return s;
}

EpisodeTokens tiny_episode() {
  EpisodeTokens ep;
  ep.support = {{seq_of({3, 4}), seq_of({4, 5})},
                {seq_of({6, 7}), seq_of({7, 8})}};
  ep.query = {{seq_of({3, 5}), 0}, {seq_of({6, 8}), 1}};
  return ep;
}

}  // namespace

TEST_CASE("cosine_similarity is scale invariant and zero-safe") {
  Tensor a = Tensor::from_data({1, 3}, {1.0, 2.0, -1.0});
  Tensor b = Tensor::from_data({1, 3}, {0.5, -1.0, 2.0});
  double base = cosine_similarity(a, b).item();
  for (double c : {0.5, 3.0, 250.0}) {
    Tensor scaled = scale(b, c);
    CHECK(std::fabs(cosine_similarity(a, scaled).item() - base) < 1e-9);
  }
  Tensor zero = Tensor::zeros({1, 3});
  CHECK(cosine_similarity(a, zero).item() == 0.0);
  Tensor self = cosine_similarity(a, a);
  CHECK(self.item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching probabilities are uniform over identical supports") {
  // Identical support texts in every slot force equal similarities.
  MatchingNetModel model(tiny_config(12), 3);
  EpisodeTokens ep;
  ep.support = {{seq_of({3, 4}), seq_of({3, 4})},
                {seq_of({3, 4}), seq_of({3, 4})},
                {seq_of({3, 4}), seq_of({3, 4})}};
  ep.query = {{seq_of({5, 6}), 0}};
  auto out = model.forward(ep, ForwardCtx::eval());
  auto p = out[0].probabilities.data();
  for (int n = 0; n < 3; ++n)
    CHECK(p[n] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("matching probabilities sum to one") {
  MatchingNetModel model(tiny_config(12), 4);
  auto out = model.forward(tiny_episode(), ForwardCtx::eval());
  for (const auto& logits : out) {
    double sum = 0.0;
    for (double p : logits.probabilities.data()) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("matching scores follow the exp-normalized cosine attention rule") {
  // Oracle on pooled vectors pulled from the same model.
  MatchingNetModel model(tiny_config(14), 5);
  EpisodeTokens ep = tiny_episode();
  auto out = model.forward(ep, ForwardCtx::eval());

  NoGradGuard ng;
  for (size_t qi = 0; qi < ep.query.size(); ++qi) {
    Tensor q = model.sentence_vector(ep.query[qi].first, ForwardCtx::eval());
    double denom = 0.0;
    std::vector<double> numer;
    for (const auto& cls : ep.support) {
      double cls_sum = 0.0;
      for (const auto& s : cls) {
        Tensor sv = model.sentence_vector(s, ForwardCtx::eval());
        cls_sum += std::exp(cosine_similarity(q, sv).item());
      }
      numer.push_back(cls_sum);
      denom += cls_sum;
    }
    auto p = out[qi].probabilities.data();
    for (size_t n = 0; n < numer.size(); ++n)
      CHECK(p[n] == doctest::Approx(numer[n] / denom).epsilon(1e-9));
  }
}

TEST_CASE("proto prototypes are support means and distances score classes") {
  ProtoModel model(tiny_config(14), 7);
  EpisodeTokens ep = tiny_episode();
  auto out = model.forward(ep, ForwardCtx::eval());

  NoGradGuard ng;
  for (size_t qi = 0; qi < ep.query.size(); ++qi) {
    Tensor q = model.sentence_vector(ep.query[qi].first, ForwardCtx::eval());
    for (size_t n = 0; n < ep.support.size(); ++n) {
      std::vector<double> proto(8, 0.0);
      for (const auto& s : ep.support[n]) {
        Tensor sv = model.sentence_vector(s, ForwardCtx::eval());
        for (int64_t k = 0; k < 8; ++k) proto[k] += sv.data()[k];
      }
      for (auto& v : proto) v /= static_cast<double>(ep.support[n].size());
      double d2 = 0.0;
      for (int64_t k = 0; k < 8; ++k) {
        double d = q.data()[k] - proto[k];
        d2 += d * d;
      }
      CHECK(out[qi].logits.data()[n] == doctest::Approx(-d2).epsilon(1e-9));
    }
  }
}

TEST_CASE("proto with identical supports across classes is uniform") {
  ProtoModel model(tiny_config(12), 9);
  EpisodeTokens ep;
  ep.support = {{seq_of({3, 4})}, {seq_of({3, 4})}, {seq_of({3, 4})}};
  ep.query = {{seq_of({5}), 0}};
  auto out = model.forward(ep, ForwardCtx::eval());
  for (double p : out[0].probabilities.data())
    CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("baselines are invariant to within-class support permutation") {
  for (int which = 0; which < 2; ++which) {
    std::unique_ptr<FewShotModel> model;
    if (which == 0)
      model = std::make_unique<ProtoModel>(tiny_config(14), 11);
    else
      model = std::make_unique<MatchingNetModel>(tiny_config(14), 11);

    EpisodeTokens ep = tiny_episode();
    EpisodeTokens shuffled = ep;
    std::swap(shuffled.support[0][0], shuffled.support[0][1]);
    std::swap(shuffled.support[1][0], shuffled.support[1][1]);

    auto a = model->forward(ep, ForwardCtx::eval());
    auto b = model->forward(shuffled, ForwardCtx::eval());
    for (size_t qi = 0; qi < a.size(); ++qi)
      for (int64_t n = 0; n < a[qi].logits.size(); ++n)
        CHECK(std::fabs(a[qi].logits.data()[n] - b[qi].logits.data()[n]) <
              1e-9);
  }
}

TEST_CASE("episode loss backpropagates through both baselines") {
  for (int which = 0; which < 2; ++which) {
    std::unique_ptr<FewShotModel> model;
    if (which == 0)
      model = std::make_unique<ProtoModel>(tiny_config(14), 13);
    else
      model = std::make_unique<MatchingNetModel>(tiny_config(14), 13);
    Tensor loss = model->loss(tiny_episode(), ForwardCtx::eval());
    CHECK(loss.item() > 0.0);
    loss.backward();
    adam_step(model->params(), 1e-3);  // every parameter received a gradient
  }
}
