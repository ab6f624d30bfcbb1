#pragma once

#include "mgimn/model.hpp"

namespace mgimn {

/// Cosine-similarity matcher over mean-pooled sentence vectors: the class
/// probability is the exp-sum of similarities to its supports, normalized
/// over all support instances.
class MatchingNetModel : public FewShotModel {
 public:
  MatchingNetModel(const EncoderConfig& cfg, uint64_t init_seed);

  std::vector<EpisodeLogits> forward(const EpisodeTokens& ep,
                                     const ForwardCtx& ctx) const override;
  ParamSet& params() override { return params_; }
  const TransformerEncoder& encoder() const override { return *encoder_; }

 private:
  ParamSet params_;
  std::unique_ptr<TransformerEncoder> encoder_;
};

/// Class prototypes are the mean of the pooled support vectors; scores are
/// negative squared euclidean distances.
class ProtoModel : public FewShotModel {
 public:
  ProtoModel(const EncoderConfig& cfg, uint64_t init_seed);

  std::vector<EpisodeLogits> forward(const EpisodeTokens& ep,
                                     const ForwardCtx& ctx) const override;
  ParamSet& params() override { return params_; }
  const TransformerEncoder& encoder() const override { return *encoder_; }

 private:
  ParamSet params_;
  std::unique_ptr<TransformerEncoder> encoder_;
};

/// Cosine similarity of two 1 x D vectors; defined as 0 when either side has
/// zero norm.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace mgimn
