#pragma once

#include <optional>

#include "mgimn/encoder.hpp"
#include "mgimn/params.hpp"

namespace mgimn {

struct AblationFlags {
  bool use_instance = true;
  bool use_class = true;
  bool use_episode = true;

  int enabled_count() const {
    return (use_instance ? 1 : 0) + (use_class ? 1 : 0) + (use_episode ? 1 : 0);
  }
  bool any() const { return enabled_count() > 0; }
};

/// Bidirectional soft alignment between two token matrices. Energies come
/// from a shared projection applied to both sides; each row of `a_aligned`
/// is a convex combination of rows of b and vice versa.
struct BiAlignResult {
  Tensor a_aligned;   // l_a x D
  Tensor b_aligned;   // l_b x D
  Tensor weights_ab;  // l_a x l_b, rows sum to 1
  Tensor weights_ba;  // l_b x l_a, rows sum to 1
};

BiAlignResult bi_align(const Tensor& a, const Tensor& b, const Linear& proj,
                       const ForwardCtx& ctx);

/// The alignment views feeding fusion; entries are only present for enabled
/// interaction levels.
struct AlignedViews {
  std::optional<Tensor> q_inst, s_inst;  // instance level (both directions)
  std::optional<Tensor> q_class, s_class;
  std::optional<Tensor> q_epi, s_epi;
};

/// Row-concatenation of member sequences with recorded boundaries.
struct ContextSeq {
  Tensor hidden;
  std::vector<int64_t> boundaries;  // strictly increasing, last == rows
};

ContextSeq make_context(const std::vector<Tensor>& members);

/// Interactive matching layers: alignment projection, per-level fusion,
/// merge, and the comparison network producing instance match vectors.
class MatchingStack {
 public:
  MatchingStack(int64_t dim, AblationFlags flags, ParamSet& params, Rng& rng);

  const Linear& projection() const { return proj_; }
  AblationFlags flags() const { return flags_; }
  int64_t dim() const { return dim_; }

  /// Fuses original and aligned representations for both sides; with no
  /// level enabled the originals pass through unchanged.
  std::pair<Tensor, Tensor> fuse(const Tensor& q, const Tensor& s,
                                 const AlignedViews& views,
                                 const ForwardCtx& ctx) const;

  /// Pools both fused sequences to 1 x 2D and compares them into a 1 x D
  /// match vector.
  Tensor instance_match(const Tensor& q_fused, const Tensor& s_fused,
                        const ForwardCtx& ctx) const;

 private:
  Tensor fuse_level(const Linear& h, const Tensor& orig, const Tensor& aligned,
                    const ForwardCtx& ctx) const;

  int64_t dim_;
  AblationFlags flags_;
  Linear proj_;  // shared across every alignment call site
  std::optional<Linear> h_inst_, h_class_, h_epi_, h_merge_;
  Linear compare_;
};

/// All alignment views for one query against an N x K support grid.
/// Class-level query views are computed once per class and episode-level
/// views once per query; support-side context views do not involve the query
/// and may be precomputed by the caller via `support_context_views`.
std::vector<std::vector<AlignedViews>> multi_grained_align(
    const Tensor& query, const std::vector<std::vector<Tensor>>& supports,
    const MatchingStack& stack, const ForwardCtx& ctx);

}  // namespace mgimn
