#include "mgimn/baselines.hpp"

namespace mgimn {

namespace {

std::vector<std::vector<Tensor>> pooled_supports(const FewShotModel& model,
                                                 const EpisodeTokens& ep,
                                                 const ForwardCtx& ctx) {
  std::vector<std::vector<Tensor>> out(ep.support.size());
  for (size_t n = 0; n < ep.support.size(); ++n) {
    if (ep.support[n].empty())
      fail(ErrorKind::data, "episode has a class with no support instances");
    for (const auto& seq : ep.support[n])
      out[n].push_back(model.sentence_vector(seq, ctx));
  }
  return out;
}

}  // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rows() != 1)
    fail(ErrorKind::shape, "cosine_similarity expects matching 1 x D vectors");
  double na = 0.0, nb = 0.0;
  for (double v : a.data()) na += v * v;
  for (double v : b.data()) nb += v * v;
  if (na == 0.0 || nb == 0.0) return Tensor::scalar(0.0);
  Tensor dot = sum_all(mul(a, b));
  Tensor denom = mul(sqrt(sum_all(mul(a, a))), sqrt(sum_all(mul(b, b))));
  // x / y as x * y^-1 via the identity grad of 1/y handled analytically.
  auto dn = denom.node();
  auto xn = dot.node();
  std::vector<double> out{dot.item() / denom.item()};
  return make_op({1, 1}, std::move(out), {dot, denom},
                 [xn, dn](detail::Node& node) {
                   double g = node.grad[0];
                   double y = dn->value[0];
                   if (xn->requires_grad) xn->grad[0] += g / y;
                   if (dn->requires_grad)
                     dn->grad[0] -= g * xn->value[0] / (y * y);
                 });
}

MatchingNetModel::MatchingNetModel(const EncoderConfig& cfg,
                                   uint64_t init_seed) {
  Rng rng(mix_seed(init_seed, 1));
  encoder_ = std::make_unique<TransformerEncoder>(cfg, params_, rng);
}

std::vector<EpisodeLogits> MatchingNetModel::forward(
    const EpisodeTokens& ep, const ForwardCtx& ctx) const {
  int64_t n_way = static_cast<int64_t>(ep.support.size());
  if (n_way < 2) fail(ErrorKind::data, "episode needs at least two classes");
  auto supports = pooled_supports(*this, ep, ctx);

  std::vector<EpisodeLogits> out;
  out.reserve(ep.query.size());
  for (const auto& [qseq, label] : ep.query) {
    Tensor q = sentence_vector(qseq, ctx);
    // log P(class) = logsumexp of its similarities minus the global logsumexp.
    std::vector<Tensor> class_lse;
    std::vector<Tensor> all_sims;
    for (int64_t n = 0; n < n_way; ++n) {
      std::vector<Tensor> sims;
      for (const auto& s : supports[n]) {
        Tensor sim = cosine_similarity(q, s);
        sims.push_back(sim);
        all_sims.push_back(sim);
      }
      class_lse.push_back(logsumexp_cols(concat_cols(sims)));
    }
    Tensor total = logsumexp_cols(concat_cols(all_sims));
    std::vector<Tensor> logp;
    logp.reserve(n_way);
    for (int64_t n = 0; n < n_way; ++n)
      logp.push_back(sub(class_lse[n], total));
    Tensor logits = concat_cols(logp);
    out.push_back(EpisodeLogits{logits, softmax_rows(logits)});
  }
  return out;
}

ProtoModel::ProtoModel(const EncoderConfig& cfg, uint64_t init_seed) {
  Rng rng(mix_seed(init_seed, 1));
  encoder_ = std::make_unique<TransformerEncoder>(cfg, params_, rng);
}

std::vector<EpisodeLogits> ProtoModel::forward(const EpisodeTokens& ep,
                                               const ForwardCtx& ctx) const {
  int64_t n_way = static_cast<int64_t>(ep.support.size());
  if (n_way < 2) fail(ErrorKind::data, "episode needs at least two classes");
  auto supports = pooled_supports(*this, ep, ctx);

  std::vector<Tensor> prototypes;
  prototypes.reserve(n_way);
  for (int64_t n = 0; n < n_way; ++n)
    prototypes.push_back(mean_rows(concat_rows(supports[n])));

  std::vector<EpisodeLogits> out;
  out.reserve(ep.query.size());
  for (const auto& [qseq, label] : ep.query) {
    Tensor q = sentence_vector(qseq, ctx);
    std::vector<Tensor> scores;
    scores.reserve(n_way);
    for (const auto& proto : prototypes) {
      Tensor diff = sub(q, proto);
      scores.push_back(scale(sum_all(mul(diff, diff)), -1.0));
    }
    Tensor logits = concat_cols(scores);
    out.push_back(EpisodeLogits{logits, softmax_rows(logits)});
  }
  return out;
}

}  // namespace mgimn
