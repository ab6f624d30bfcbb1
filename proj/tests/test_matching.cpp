#include <doctest.h>

#include <cmath>

#include "mgimn/matching.hpp"

using namespace mgimn;

namespace {

Tensor random_matrix(int64_t r, int64_t c, Rng& rng, bool grad = false) {
  Tensor t = Tensor::zeros({r, c}, grad);
  for (auto& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Linear identity_projection(int64_t dim) {
  Linear f;
  f.w = Tensor::zeros({dim, dim});
  auto wv = f.w.mutable_data();
  for (int64_t i = 0; i < dim; ++i) wv[i * dim + i] = 1.0;
  f.b = Tensor::zeros({1, dim});
  f.act = Activation::identity;
  f.dropout_input = false;
  return f;
}

// Direct enumeration of the alignment definition: energies from projected
// dot products, per-row softmax weights, weighted sums of the other side.
std::vector<double> naive_align_a(const Tensor& a, const Tensor& b) {
  int64_t la = a.rows(), lb = b.rows(), d = a.cols();
  std::vector<double> out(la * d, 0.0);
  for (int64_t i = 0; i < la; ++i) {
    std::vector<double> e(lb);
    double mx = -1e300;
    for (int64_t j = 0; j < lb; ++j) {
      double dot = 0.0;
      for (int64_t k = 0; k < d; ++k) dot += a.at(i, k) * b.at(j, k);
      e[j] = dot;
      mx = std::max(mx, dot);
    }
    double z = 0.0;
    for (int64_t j = 0; j < lb; ++j) z += std::exp(e[j] - mx);
    for (int64_t j = 0; j < lb; ++j) {
      double w = std::exp(e[j] - mx) / z;
      for (int64_t k = 0; k < d; ++k) out[i * d + k] += w * b.at(j, k);
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

MatchingStack make_stack(int64_t dim, AblationFlags flags, ParamSet& params,
                         uint64_t seed) {
  Rng rng(seed);
  return MatchingStack(dim, flags, params, rng);
}

}  // namespace

TEST_CASE("bi_align with single rows forces weight one") {
  Linear f = identity_projection(3);
  Tensor a = Tensor::from_data({1, 3}, {0.3, -0.7, 1.1});
  Tensor b = Tensor::from_data({1, 3}, {2.0, 0.5, -0.4});
  auto res = bi_align(a, b, f, ForwardCtx::eval());
  CHECK(res.weights_ab.data()[0] == doctest::Approx(1.0));
  CHECK(res.weights_ba.data()[0] == doctest::Approx(1.0));
  for (int64_t k = 0; k < 3; ++k) {
    CHECK(res.a_aligned.data()[k] == doctest::Approx(b.data()[k]));
    CHECK(res.b_aligned.data()[k] == doctest::Approx(a.data()[k]));
  }
}

TEST_CASE("bi_align against identical rows returns that row") {
  Linear f = identity_projection(2);
  Tensor a = Tensor::from_data({3, 2}, {1.0, 0.0, 0.0, 1.0, 0.5, 0.5});
  Tensor b = Tensor::from_data({2, 2}, {0.25, -0.75, 0.25, -0.75});
  auto res = bi_align(a, b, f, ForwardCtx::eval());
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(res.a_aligned.at(i, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(res.a_aligned.at(i, 1) == doctest::Approx(-0.75).epsilon(1e-12));
  }
}

TEST_CASE("bi_align with identity projection matches direct enumeration") {
  Rng rng(55);
  Linear f = identity_projection(3);
  Tensor a = random_matrix(2, 3, rng);
  Tensor b = random_matrix(3, 3, rng);
  auto res = bi_align(a, b, f, ForwardCtx::eval());

  auto expect_a = naive_align_a(a, b);
  for (int64_t i = 0; i < res.a_aligned.size(); ++i)
    CHECK(res.a_aligned.data()[i] ==
          doctest::Approx(expect_a[i]).epsilon(1e-12));

  Tensor bt_first = res.b_aligned;
  auto expect_b = naive_align_a(b, a);  // symmetric definition
  for (int64_t i = 0; i < bt_first.size(); ++i)
    CHECK(bt_first.data()[i] == doctest::Approx(expect_b[i]).epsilon(1e-12));
}

TEST_CASE("bi_align rejects width mismatch") {
  Linear f = identity_projection(3);
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(bi_align(a, b, f, ForwardCtx::eval()), Error);
}

TEST_CASE("alignment weights are row-stochastic") {
  Rng rng(56);
  ParamSet params;
  MatchingStack stack = make_stack(4, {}, params, 7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_matrix(3, 4, rng);
    Tensor b = random_matrix(5, 4, rng);
    auto res = bi_align(a, b, stack.projection(), ForwardCtx::eval());
    for (const Tensor* w : {&res.weights_ab, &res.weights_ba}) {
      auto v = w->data();
      int64_t rows = w->rows(), cols = w->cols();
      for (int64_t i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
          CHECK(v[i * cols + j] >= 0.0);
          sum += v[i * cols + j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("context-order permutation leaves aligned views unchanged") {
  Rng rng(57);
  ParamSet params;
  MatchingStack stack = make_stack(4, {}, params, 8);

  Tensor q = random_matrix(3, 4, rng);
  std::vector<Tensor> members;
  for (int i = 0; i < 4; ++i) members.push_back(random_matrix(2 + i % 2, 4, rng));

  Tensor ctx_a = make_context(members).hidden;
  std::vector<Tensor> shuffled{members[2], members[0], members[3], members[1]};
  Tensor ctx_b = make_context(shuffled).hidden;

  Tensor qa = bi_align(q, ctx_a, stack.projection(), ForwardCtx::eval()).a_aligned;
  Tensor qb = bi_align(q, ctx_b, stack.projection(), ForwardCtx::eval()).a_aligned;
  CHECK(max_abs_diff(qa, qb) < 1e-9);
}

TEST_CASE("multi_grained_align caching equals naive per-pair recomputation") {
  Rng rng(58);
  ParamSet params;
  MatchingStack stack = make_stack(4, {}, params, 9);
  const Linear& proj = stack.projection();

  Tensor q = random_matrix(3, 4, rng);
  std::vector<std::vector<Tensor>> supports(2);
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 2; ++k)
      supports[n].push_back(random_matrix(2 + k, 4, rng));

  auto views = multi_grained_align(q, supports, stack, ForwardCtx::eval());

  // Uncached oracle: every view recomputed from scratch per (n, k).
  for (int n = 0; n < 2; ++n) {
    Tensor cls_ctx = make_context(supports[n]).hidden;
    Tensor epi_ctx = make_context({make_context(supports[0]).hidden,
                                   make_context(supports[1]).hidden})
                         .hidden;
    for (int k = 0; k < 2; ++k) {
      const auto& v = views[n][k];
      auto inst = bi_align(q, supports[n][k], proj, ForwardCtx::eval());
      CHECK(max_abs_diff(*v.q_inst, inst.a_aligned) == 0.0);
      CHECK(max_abs_diff(*v.s_inst, inst.b_aligned) == 0.0);
      Tensor q_class = bi_align(q, cls_ctx, proj, ForwardCtx::eval()).a_aligned;
      CHECK(max_abs_diff(*v.q_class, q_class) == 0.0);
      Tensor s_class =
          bi_align(supports[n][k], cls_ctx, proj, ForwardCtx::eval()).a_aligned;
      CHECK(max_abs_diff(*v.s_class, s_class) == 0.0);
      Tensor q_epi = bi_align(q, epi_ctx, proj, ForwardCtx::eval()).a_aligned;
      CHECK(max_abs_diff(*v.q_epi, q_epi) == 0.0);
      Tensor s_epi =
          bi_align(supports[n][k], epi_ctx, proj, ForwardCtx::eval()).a_aligned;
      CHECK(max_abs_diff(*v.s_epi, s_epi) == 0.0);
    }
  }
}

TEST_CASE("single class and shot make class and episode contexts coincide") {
  Rng rng(59);
  ParamSet params;
  MatchingStack stack = make_stack(4, {}, params, 10);

  Tensor q = random_matrix(2, 4, rng);
  std::vector<std::vector<Tensor>> supports{{random_matrix(3, 4, rng)}};
  auto views = multi_grained_align(q, supports, stack, ForwardCtx::eval());
  CHECK(max_abs_diff(*views[0][0].q_class, *views[0][0].q_epi) == 0.0);
  CHECK(max_abs_diff(*views[0][0].s_class, *views[0][0].s_epi) == 0.0);
}

TEST_CASE("all-false flags produce no aligned views and bypass fusion") {
  Rng rng(60);
  ParamSet params;
  AblationFlags off{false, false, false};
  MatchingStack stack = make_stack(4, off, params, 11);

  Tensor q = random_matrix(2, 4, rng);
  std::vector<std::vector<Tensor>> supports{{random_matrix(2, 4, rng)},
                                            {random_matrix(3, 4, rng)}};
  auto views = multi_grained_align(q, supports, stack, ForwardCtx::eval());
  CHECK_FALSE(views[0][0].q_inst.has_value());
  CHECK_FALSE(views[0][0].q_class.has_value());
  CHECK_FALSE(views[0][0].q_epi.has_value());

  auto [qf, sf] = stack.fuse(q, supports[0][0], views[0][0], ForwardCtx::eval());
  CHECK(qf.node() == q.node());  // originals pass through untouched
  CHECK(sf.node() == supports[0][0].node());
}

TEST_CASE("ablation flags drop fusion parameters") {
  ParamSet full_params;
  make_stack(4, {}, full_params, 12);
  ParamSet off_params;
  make_stack(4, {false, false, false}, off_params, 12);
  CHECK(off_params.param_count() < full_params.param_count());
  CHECK(off_params.find("match.fuse_inst.w") == nullptr);
  CHECK(off_params.find("match.fuse_merge.w") == nullptr);
  CHECK(off_params.find("match.compare.w") != nullptr);

  // Dropping one level shrinks the merge width by D.
  ParamSet two_params;
  make_stack(4, {true, true, false}, two_params, 12);
  CHECK(two_params.find("match.fuse_merge.w")->value.shape()[0] == 8);
  CHECK(full_params.find("match.fuse_merge.w")->value.shape()[0] == 12);
}

TEST_CASE("fuse with zero inputs and zero weights yields zeros") {
  ParamSet params;
  MatchingStack stack = make_stack(3, {}, params, 13);
  for (auto& e : params.entries())
    for (auto& v : e.value.mutable_data()) v = 0.0;

  Tensor q = Tensor::zeros({2, 3});
  Tensor s = Tensor::zeros({2, 3});
  AlignedViews views;
  views.q_inst = Tensor::zeros({2, 3});
  views.s_inst = Tensor::zeros({2, 3});
  views.q_class = Tensor::zeros({2, 3});
  views.s_class = Tensor::zeros({2, 3});
  views.q_epi = Tensor::zeros({2, 3});
  views.s_epi = Tensor::zeros({2, 3});
  auto [qf, sf] = stack.fuse(q, s, views, ForwardCtx::eval());
  for (double v : qf.data()) CHECK(v == 0.0);
  for (double v : sf.data()) CHECK(v == 0.0);
}

TEST_CASE("fuse output shapes match inputs for every flag subset") {
  Rng rng(61);
  for (int mask = 0; mask < 8; ++mask) {
    AblationFlags flags{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    ParamSet params;
    MatchingStack stack = make_stack(4, flags, params, 14);
    Tensor q = random_matrix(3, 4, rng);
    Tensor s = random_matrix(2, 4, rng);
    std::vector<std::vector<Tensor>> supports{{s}, {random_matrix(2, 4, rng)}};
    auto views = multi_grained_align(q, supports, stack, ForwardCtx::eval());
    auto [qf, sf] = stack.fuse(q, s, views[0][0], ForwardCtx::eval());
    CHECK(qf.rows() == 3);
    CHECK(qf.cols() == 4);
    CHECK(sf.rows() == 2);
    CHECK(sf.cols() == 4);
  }
}

TEST_CASE("single-level fusion matches hand-evaluated concat-affine") {
  Rng rng(62);
  ParamSet params;
  AblationFlags inst_only{true, false, false};
  MatchingStack stack = make_stack(2, inst_only, params, 15);

  Tensor q = random_matrix(2, 2, rng);
  Tensor s = random_matrix(1, 2, rng);
  auto inst = bi_align(q, s, stack.projection(), ForwardCtx::eval());
  AlignedViews views;
  views.q_inst = inst.a_aligned;
  views.s_inst = inst.b_aligned;
  auto [qf, sf] = stack.fuse(q, s, views, ForwardCtx::eval());

  const auto* h1 = params.find("match.fuse_inst.w");
  const auto* h1b = params.find("match.fuse_inst.b");
  const auto* hm = params.find("match.fuse_merge.w");
  const auto* hmb = params.find("match.fuse_merge.b");
  REQUIRE(h1 != nullptr);

  for (int64_t i = 0; i < 2; ++i) {
    // features: [orig; aligned; |orig - aligned|; orig * aligned]
    double feat[8];
    for (int64_t k = 0; k < 2; ++k) {
      double o = q.at(i, k), al = views.q_inst->at(i, k);
      feat[k] = o;
      feat[2 + k] = al;
      feat[4 + k] = std::fabs(o - al);
      feat[6 + k] = o * al;
    }
    double level[2];
    for (int64_t j = 0; j < 2; ++j) {
      double acc = h1b->value.at(0, j);
      for (int64_t k = 0; k < 8; ++k) acc += feat[k] * h1->value.at(k, j);
      level[j] = std::max(acc, 0.0);
    }
    for (int64_t j = 0; j < 2; ++j) {
      double acc = hmb->value.at(0, j);
      for (int64_t k = 0; k < 2; ++k) acc += level[k] * hm->value.at(k, j);
      double expect = std::max(acc, 0.0);
      CHECK(qf.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("instance_match matches direct formula evaluation") {
  Rng rng(63);
  ParamSet params;
  MatchingStack stack = make_stack(2, {}, params, 16);

  Tensor qf = random_matrix(3, 2, rng);
  Tensor sf = random_matrix(2, 2, rng);
  Tensor m = stack.instance_match(qf, sf, ForwardCtx::eval());
  CHECK(m.rows() == 1);
  CHECK(m.cols() == 2);

  Tensor qv = pool_max_avg(qf);
  Tensor sv = pool_max_avg(sf);
  const auto* g = params.find("match.compare.w");
  const auto* gb = params.find("match.compare.b");
  double feat[16];
  for (int64_t k = 0; k < 4; ++k) {
    feat[k] = qv.data()[k];
    feat[4 + k] = sv.data()[k];
    feat[8 + k] = std::fabs(qv.data()[k] - sv.data()[k]);
    feat[12 + k] = qv.data()[k] * sv.data()[k];
  }
  for (int64_t j = 0; j < 2; ++j) {
    double acc = gb->value.at(0, j);
    for (int64_t k = 0; k < 16; ++k) acc += feat[k] * g->value.at(k, j);
    CHECK(m.at(0, j) == doctest::Approx(std::max(acc, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("instance_match with equal inputs zeroes the difference block") {
  Rng rng(64);
  ParamSet params;
  MatchingStack stack = make_stack(3, {}, params, 17);
  Tensor x = random_matrix(2, 3, rng);
  // The |q - s| block is exactly zero, so changing only those weights must
  // not affect the output.
  Tensor m1 = stack.instance_match(x, x, ForwardCtx::eval());
  auto* g = params.find("match.compare.w");
  auto gw = g->value.mutable_data();
  for (int64_t k = 12; k < 18; ++k)  // rows 2D..3D of the 8D input
    for (int64_t j = 0; j < 3; ++j) gw[k * 3 + j] += 10.0;
  Tensor m2 = stack.instance_match(x, x, ForwardCtx::eval());
  CHECK(max_abs_diff(m1, m2) == 0.0);
}
