#include "mgimn/aggregate.hpp"

namespace mgimn {

Tensor class_aggregate(const std::vector<Tensor>& matches) {
  if (matches.empty()) fail(ErrorKind::data, "class_aggregate: no match vectors");
  for (const auto& m : matches)
    if (m.rows() != 1 || m.cols() != matches[0].cols())
      fail(ErrorKind::shape, "class_aggregate: match vectors must share 1 x D");
  return pool_max_avg(concat_rows(matches));
}

int EpisodeLogits::argmax() const {
  auto v = logits.data();
  int best = 0;
  for (int j = 1; j < static_cast<int>(v.size()); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

Predictor::Predictor(int64_t dim, ParamSet& params, Rng& rng)
    : hidden_("predict.hidden", 2 * dim, dim, Activation::relu, params, rng),
      out_("predict.out", dim, 1, Activation::identity, params, rng) {}

EpisodeLogits Predictor::predict(const std::vector<Tensor>& class_vectors,
                                 const ForwardCtx& ctx) const {
  if (class_vectors.size() < 2)
    fail(ErrorKind::config, "predict: needs at least two classes");
  std::vector<Tensor> scores;
  scores.reserve(class_vectors.size());
  for (const auto& cv : class_vectors)
    scores.push_back(out_.apply(hidden_.apply(cv, ctx), ctx));
  Tensor logits = concat_cols(scores);
  return EpisodeLogits{logits, softmax_rows(logits)};
}

Tensor episode_loss(const std::vector<EpisodeLogits>& batch,
                    const std::vector<int>& labels) {
  if (batch.empty() || batch.size() != labels.size())
    fail(ErrorKind::data, "episode_loss: batch and labels must align");
  std::vector<Tensor> terms;
  terms.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    int64_t n = batch[i].n_way();
    if (labels[i] < 0 || labels[i] >= n)
      fail(ErrorKind::data, "episode_loss: label out of range");
    Tensor logp = log_softmax_rows(batch[i].logits);
    terms.push_back(slice_cols(logp, labels[i], labels[i] + 1));
  }
  return scale(mean_all(concat_cols(terms)), -1.0);
}

}  // namespace mgimn
