#include "mgimn/encoder.hpp"

#include <cmath>

namespace mgimn {

namespace {
// Additive key mask; exp(-1e30 - max) underflows to exactly zero, which keeps
// real-token outputs bit-identical under extra padding.
constexpr double kMaskedEnergy = -1e30;
}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || max_seq_len < 2 ||
      vocab_size < 3)
    fail(ErrorKind::config, "encoder config fields must be positive");
  if (hidden % heads != 0)
    fail(ErrorKind::config, "encoder hidden size must be divisible by heads");
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& cfg,
                                       ParamSet& params, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  int64_t d = cfg_.hidden;
  tok_emb_ = params.add("enc.tok_emb", {cfg_.vocab_size, d},
                        Init::glorot_uniform, rng);
  pos_emb_ = params.add("enc.pos_emb", {cfg_.max_seq_len, d},
                        Init::glorot_uniform, rng);
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    std::string p = "enc.block" + std::to_string(l);
    Block b{
        Linear(p + ".attn.q", d, d, Activation::identity, params, rng, false,
               false),
        Linear(p + ".attn.k", d, d, Activation::identity, params, rng, false,
               false),
        Linear(p + ".attn.v", d, d, Activation::identity, params, rng, false,
               false),
        Linear(p + ".attn.out", d, d, Activation::identity, params, rng, false),
        LayerNorm(p + ".ln_attn", d, params, rng),
        Linear(p + ".ff.in", d, 4 * d, Activation::gelu, params, rng, false),
        Linear(p + ".ff.out", 4 * d, d, Activation::identity, params, rng,
               false),
        LayerNorm(p + ".ln_ff", d, params, rng),
    };
    blocks_.push_back(std::move(b));
  }
}

EncodedSeq TransformerEncoder::encode(const TokenSeq& seq,
                                      const ForwardCtx& ctx,
                                      EncodeTrace* trace) const {
  int64_t total = static_cast<int64_t>(seq.ids.size());
  if (seq.length < 2 || seq.length > total)
    fail(ErrorKind::data, "encode: token sequence length out of range");
  if (total > cfg_.max_seq_len)
    fail(ErrorKind::data, "encode: sequence exceeds max_seq_len");
  for (int64_t i = seq.length; i < total; ++i)
    if (seq.ids[i] != Vocabulary::kPad)
      fail(ErrorKind::data, "encode: non-PAD id beyond sequence length");

  int64_t d = cfg_.hidden;
  int64_t heads = cfg_.heads;
  int64_t dh = d / heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor x = add(embedding_lookup(tok_emb_, seq.ids),
                 slice_rows(pos_emb_, 0, total));

  // Constant bias matrix pushing PAD keys out of every softmax row.
  Tensor key_mask;
  if (total > seq.length) {
    std::vector<double> mask(total * total, 0.0);
    for (int64_t i = 0; i < total; ++i)
      for (int64_t j = seq.length; j < total; ++j)
        mask[i * total + j] = kMaskedEnergy;
    key_mask = Tensor::from_data({total, total}, std::move(mask));
  }

  for (const auto& blk : blocks_) {
    Tensor q = blk.wq.apply(x, ctx);
    Tensor k = blk.wk.apply(x, ctx);
    Tensor v = blk.wv.apply(x, ctx);
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (int64_t h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor energy = scale(matmul_nt(qh, kh), att_scale);
      if (key_mask.defined()) energy = add(energy, key_mask);
      Tensor weights = softmax_rows(energy);
      if (trace != nullptr) trace->attention.push_back(weights);
      head_outs.push_back(matmul(weights, vh));
    }
    Tensor attn = blk.wo.apply(concat_cols(head_outs), ctx);
    x = blk.ln_attn.apply(add(x, attn));
    Tensor ff = blk.ff_out.apply(blk.ff_in.apply(x, ctx), ctx);
    x = blk.ln_ff.apply(add(x, ff));
  }

  // CLS and PAD rows are dropped; downstream matching sees real tokens only.
  return EncodedSeq{slice_rows(x, 1, seq.length)};
}

}  // namespace mgimn
