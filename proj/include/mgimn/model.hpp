#pragma once

#include <memory>

#include "mgimn/aggregate.hpp"
#include "mgimn/encoder.hpp"
#include "mgimn/episodes.hpp"
#include "mgimn/matching.hpp"

namespace mgimn {

/// An episode with texts already tokenized.
struct EpisodeTokens {
  std::vector<std::vector<TokenSeq>> support;   // N x K
  std::vector<std::pair<TokenSeq, int>> query;  // (tokens, local label)
};

EpisodeTokens tokenize_episode(const Episode& ep, const Dataset& ds,
                               const Vocabulary& vocab, int64_t max_seq_len);

/// Common surface for the matcher and both reference models: everything a
/// training or evaluation loop needs.
class FewShotModel {
 public:
  virtual ~FewShotModel() = default;

  virtual std::vector<EpisodeLogits> forward(const EpisodeTokens& ep,
                                             const ForwardCtx& ctx) const = 0;
  Tensor loss(const EpisodeTokens& ep, const ForwardCtx& ctx) const;

  virtual ParamSet& params() = 0;
  const ParamSet& params() const;
  virtual const TransformerEncoder& encoder() const = 0;

  /// Mean-pooled sentence vector (1 x D) under the given context.
  Tensor sentence_vector(const TokenSeq& seq, const ForwardCtx& ctx) const;
};

struct MgimnConfig {
  EncoderConfig enc;
  AblationFlags flags;
};

/// Interactive matcher: encode, align at instance/class/episode level, fuse,
/// compare per support instance, aggregate per class, score.
class MgimnModel : public FewShotModel {
 public:
  MgimnModel(const MgimnConfig& cfg, uint64_t init_seed);

  std::vector<EpisodeLogits> forward(const EpisodeTokens& ep,
                                     const ForwardCtx& ctx) const override;
  ParamSet& params() override { return params_; }
  const TransformerEncoder& encoder() const override { return *encoder_; }
  const MatchingStack& matching() const { return *matching_; }
  const MgimnConfig& config() const { return cfg_; }

 private:
  MgimnConfig cfg_;
  ParamSet params_;
  std::unique_ptr<TransformerEncoder> encoder_;
  std::unique_ptr<MatchingStack> matching_;
  std::unique_ptr<Predictor> predictor_;
};

}  // namespace mgimn
