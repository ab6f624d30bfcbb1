#include "mgimn/matching.hpp"

namespace mgimn {

BiAlignResult bi_align(const Tensor& a, const Tensor& b, const Linear& proj,
                       const ForwardCtx& ctx) {
  if (a.cols() != b.cols())
    fail(ErrorKind::shape, "bi_align: inputs have different widths");
  Tensor pa = proj.apply(a, ctx);
  Tensor pb = proj.apply(b, ctx);
  Tensor energy = matmul_nt(pa, pb);  // l_a x l_b
  Tensor w_ab = softmax_rows(energy);
  Tensor w_ba = softmax_rows(transpose(energy));
  return BiAlignResult{matmul(w_ab, b), matmul(w_ba, a), w_ab, w_ba};
}

ContextSeq make_context(const std::vector<Tensor>& members) {
  if (members.empty()) fail(ErrorKind::data, "make_context: no members");
  ContextSeq ctx;
  ctx.hidden = concat_rows(members);
  int64_t off = 0;
  for (const auto& m : members) {
    off += m.rows();
    ctx.boundaries.push_back(off);
  }
  return ctx;
}

MatchingStack::MatchingStack(int64_t dim, AblationFlags flags, ParamSet& params,
                             Rng& rng)
    : dim_(dim),
      flags_(flags),
      proj_("match.align_proj", dim, dim, Activation::relu, params, rng) {
  if (flags_.use_instance)
    h_inst_.emplace("match.fuse_inst", 4 * dim, dim, Activation::relu, params,
                    rng);
  if (flags_.use_class)
    h_class_.emplace("match.fuse_class", 4 * dim, dim, Activation::relu,
                     params, rng);
  if (flags_.use_episode)
    h_epi_.emplace("match.fuse_epi", 4 * dim, dim, Activation::relu, params,
                   rng);
  if (flags_.any())
    h_merge_.emplace("match.fuse_merge", flags_.enabled_count() * dim, dim,
                     Activation::relu, params, rng);
  compare_ = Linear("match.compare", 8 * dim, dim, Activation::relu, params,
                    rng);
}

Tensor MatchingStack::fuse_level(const Linear& h, const Tensor& orig,
                                 const Tensor& aligned,
                                 const ForwardCtx& ctx) const {
  Tensor features = concat_cols(
      {orig, aligned, abs(sub(orig, aligned)), mul(orig, aligned)});
  return h.apply(features, ctx);
}

std::pair<Tensor, Tensor> MatchingStack::fuse(const Tensor& q, const Tensor& s,
                                              const AlignedViews& views,
                                              const ForwardCtx& ctx) const {
  if (!flags_.any()) return {q, s};  // degenerate pooled-comparison variant

  std::vector<Tensor> q_levels, s_levels;
  if (flags_.use_instance) {
    q_levels.push_back(fuse_level(*h_inst_, q, views.q_inst.value(), ctx));
    s_levels.push_back(fuse_level(*h_inst_, s, views.s_inst.value(), ctx));
  }
  if (flags_.use_class) {
    q_levels.push_back(fuse_level(*h_class_, q, views.q_class.value(), ctx));
    s_levels.push_back(fuse_level(*h_class_, s, views.s_class.value(), ctx));
  }
  if (flags_.use_episode) {
    q_levels.push_back(fuse_level(*h_epi_, q, views.q_epi.value(), ctx));
    s_levels.push_back(fuse_level(*h_epi_, s, views.s_epi.value(), ctx));
  }
  return {h_merge_->apply(concat_cols(q_levels), ctx),
          h_merge_->apply(concat_cols(s_levels), ctx)};
}

Tensor MatchingStack::instance_match(const Tensor& q_fused,
                                     const Tensor& s_fused,
                                     const ForwardCtx& ctx) const {
  Tensor qv = pool_max_avg(q_fused);  // 1 x 2D
  Tensor sv = pool_max_avg(s_fused);
  Tensor features = concat_cols({qv, sv, abs(sub(qv, sv)), mul(qv, sv)});
  return compare_.apply(features, ctx);
}

std::vector<std::vector<AlignedViews>> multi_grained_align(
    const Tensor& query, const std::vector<std::vector<Tensor>>& supports,
    const MatchingStack& stack, const ForwardCtx& ctx) {
  int64_t n_way = static_cast<int64_t>(supports.size());
  if (n_way < 1) fail(ErrorKind::data, "multi_grained_align: empty support set");
  for (const auto& cls : supports)
    if (cls.empty())
      fail(ErrorKind::data, "multi_grained_align: class with no supports");

  const AblationFlags flags = stack.flags();
  const Linear& proj = stack.projection();

  // Class- and episode-specific contexts.
  std::vector<Tensor> class_ctx;
  if (flags.use_class || flags.use_episode) {
    class_ctx.reserve(n_way);
    for (const auto& cls : supports) class_ctx.push_back(make_context(cls).hidden);
  }
  Tensor episode_ctx;
  if (flags.use_episode) episode_ctx = make_context(class_ctx).hidden;

  // Episode-aware query view: one alignment per query.
  std::optional<Tensor> q_epi;
  if (flags.use_episode)
    q_epi = bi_align(query, episode_ctx, proj, ctx).a_aligned;

  std::vector<std::vector<AlignedViews>> out(n_way);
  for (int64_t n = 0; n < n_way; ++n) {
    // Class-aware query view: computed once per class, reused across shots.
    std::optional<Tensor> q_class;
    if (flags.use_class)
      q_class = bi_align(query, class_ctx[n], proj, ctx).a_aligned;

    out[n].reserve(supports[n].size());
    for (const auto& s : supports[n]) {
      AlignedViews views;
      if (flags.use_instance) {
        auto inst = bi_align(query, s, proj, ctx);
        views.q_inst = inst.a_aligned;
        views.s_inst = inst.b_aligned;
      }
      if (flags.use_class) {
        views.q_class = q_class;
        views.s_class = bi_align(s, class_ctx[n], proj, ctx).a_aligned;
      }
      if (flags.use_episode) {
        views.q_epi = q_epi;
        views.s_epi = bi_align(s, episode_ctx, proj, ctx).a_aligned;
      }
      out[n].push_back(std::move(views));
    }
  }
  return out;
}

}  // namespace mgimn
