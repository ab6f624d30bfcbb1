#pragma once

#include "mgimn/params.hpp"

namespace mgimn {

/// Elementwise max over the K match vectors concatenated with their
/// elementwise mean: K vectors of width D collapse to one of width 2D.
Tensor class_aggregate(const std::vector<Tensor>& matches);

struct EpisodeLogits {
  Tensor logits;         // 1 x N
  Tensor probabilities;  // softmax of logits, 1 x N
  int64_t n_way() const { return logits.shape()[1]; }
  int argmax() const;
};

/// Shared two-layer scorer applied independently to each class vector
/// (2D -> D with ReLU -> 1), softmaxed over classes.
class Predictor {
 public:
  Predictor(int64_t dim, ParamSet& params, Rng& rng);
  EpisodeLogits predict(const std::vector<Tensor>& class_vectors,
                        const ForwardCtx& ctx) const;

 private:
  Linear hidden_;
  Linear out_;
};

/// Mean negative log-probability of the true class over the query batch.
Tensor episode_loss(const std::vector<EpisodeLogits>& batch,
                    const std::vector<int>& labels);

}  // namespace mgimn
