#pragma once

#include <optional>

#include "mgimn/params.hpp"
#include "mgimn/vocab.hpp"

namespace mgimn {

struct EncoderConfig {
  int64_t layers = 2;
  int64_t hidden = 128;
  int64_t heads = 2;
  int64_t max_seq_len = 32;
  int64_t vocab_size = 0;

  void validate() const;
};

/// Per-token hidden states for one text; the CLS row is already dropped.
struct EncodedSeq {
  Tensor hidden;  // l x D
  int64_t length() const { return hidden.shape()[0]; }
};

/// Attention weights captured for inspection; one R x R matrix per
/// (layer, head), rows are query positions.
struct EncodeTrace {
  std::vector<Tensor> attention;
};

/// Token + learned positional embeddings followed by standard post-norm
/// transformer blocks (self-attention, residual + layer norm, feed-forward of
/// inner size 4D with GELU, residual + layer norm). PAD positions are masked
/// out of attention so outputs do not depend on padding length.
class TransformerEncoder {
 public:
  TransformerEncoder(const EncoderConfig& cfg, ParamSet& params, Rng& rng);

  EncodedSeq encode(const TokenSeq& seq, const ForwardCtx& ctx,
                    EncodeTrace* trace = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    Linear wq, wk, wv, wo;
    LayerNorm ln_attn;
    Linear ff_in, ff_out;
    LayerNorm ln_ff;
  };

  EncoderConfig cfg_;
  Tensor tok_emb_;  // vocab x D
  Tensor pos_emb_;  // max_seq_len x D
  std::vector<Block> blocks_;
};

}  // namespace mgimn
