#include "mgimn/model.hpp"

namespace mgimn {

EpisodeTokens tokenize_episode(const Episode& ep, const Dataset& ds,
                               const Vocabulary& vocab, int64_t max_seq_len) {
  EpisodeTokens out;
  out.support.reserve(ep.support.size());
  for (const auto& cls : ep.support) {
    std::vector<TokenSeq> seqs;
    seqs.reserve(cls.size());
    for (int64_t idx : cls)
      seqs.push_back(tokenize(ds.instances[idx].text, vocab, max_seq_len));
    out.support.push_back(std::move(seqs));
  }
  out.query.reserve(ep.query.size());
  for (const auto& [idx, label] : ep.query)
    out.query.emplace_back(tokenize(ds.instances[idx].text, vocab, max_seq_len),
                           label);
  return out;
}

Tensor FewShotModel::loss(const EpisodeTokens& ep, const ForwardCtx& ctx) const {
  auto logits = forward(ep, ctx);
  std::vector<int> labels;
  labels.reserve(ep.query.size());
  for (const auto& [seq, label] : ep.query) labels.push_back(label);
  return episode_loss(logits, labels);
}

const ParamSet& FewShotModel::params() const {
  return const_cast<FewShotModel*>(this)->params();
}

Tensor FewShotModel::sentence_vector(const TokenSeq& seq,
                                     const ForwardCtx& ctx) const {
  return mean_rows(encoder().encode(seq, ctx).hidden);
}

MgimnModel::MgimnModel(const MgimnConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  Rng rng(mix_seed(init_seed, 1));
  encoder_ = std::make_unique<TransformerEncoder>(cfg_.enc, params_, rng);
  matching_ =
      std::make_unique<MatchingStack>(cfg_.enc.hidden, cfg_.flags, params_, rng);
  predictor_ = std::make_unique<Predictor>(cfg_.enc.hidden, params_, rng);
}

std::vector<EpisodeLogits> MgimnModel::forward(const EpisodeTokens& ep,
                                               const ForwardCtx& ctx) const {
  int64_t n_way = static_cast<int64_t>(ep.support.size());
  if (n_way < 2) fail(ErrorKind::data, "episode needs at least two classes");
  if (ep.query.empty()) fail(ErrorKind::data, "episode has no queries");

  const AblationFlags flags = matching_->flags();
  const Linear& proj = matching_->projection();

  std::vector<std::vector<Tensor>> supports(n_way);
  for (int64_t n = 0; n < n_way; ++n) {
    if (ep.support[n].empty())
      fail(ErrorKind::data, "episode has a class with no support instances");
    for (const auto& seq : ep.support[n])
      supports[n].push_back(encoder_->encode(seq, ctx).hidden);
  }

  std::vector<Tensor> class_ctx(n_way);
  Tensor episode_ctx;
  if (flags.use_class || flags.use_episode)
    for (int64_t n = 0; n < n_way; ++n)
      class_ctx[n] = make_context(supports[n]).hidden;
  if (flags.use_episode) episode_ctx = make_context(class_ctx).hidden;

  // Context alignments of each support instance do not involve the query, so
  // they are shared by every query in the episode.
  std::vector<std::vector<Tensor>> s_class(n_way), s_epi(n_way);
  for (int64_t n = 0; n < n_way; ++n) {
    for (const auto& s : supports[n]) {
      if (flags.use_class)
        s_class[n].push_back(bi_align(s, class_ctx[n], proj, ctx).a_aligned);
      if (flags.use_episode)
        s_epi[n].push_back(bi_align(s, episode_ctx, proj, ctx).a_aligned);
    }
  }

  std::vector<EpisodeLogits> out;
  out.reserve(ep.query.size());
  for (const auto& [qseq, label] : ep.query) {
    Tensor q = encoder_->encode(qseq, ctx).hidden;

    std::optional<Tensor> q_epi;
    if (flags.use_episode)
      q_epi = bi_align(q, episode_ctx, proj, ctx).a_aligned;

    std::vector<Tensor> class_vectors;
    class_vectors.reserve(n_way);
    for (int64_t n = 0; n < n_way; ++n) {
      std::optional<Tensor> q_class;
      if (flags.use_class)
        q_class = bi_align(q, class_ctx[n], proj, ctx).a_aligned;

      std::vector<Tensor> matches;
      matches.reserve(supports[n].size());
      for (size_t k = 0; k < supports[n].size(); ++k) {
        AlignedViews views;
        if (flags.use_instance) {
          auto inst = bi_align(q, supports[n][k], proj, ctx);
          views.q_inst = inst.a_aligned;
          views.s_inst = inst.b_aligned;
        }
        if (flags.use_class) {
          views.q_class = q_class;
          views.s_class = s_class[n][k];
        }
        if (flags.use_episode) {
          views.q_epi = q_epi;
          views.s_epi = s_epi[n][k];
        }
        auto [qf, sf] = matching_->fuse(q, supports[n][k], views, ctx);
        matches.push_back(matching_->instance_match(qf, sf, ctx));
      }
      class_vectors.push_back(class_aggregate(matches));
    }
    out.push_back(predictor_->predict(class_vectors, ctx));
  }
  return out;
}

}  // namespace mgimn
