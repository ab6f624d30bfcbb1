#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mgimn/common.hpp"

namespace mgimn {

using Shape = std::vector<int64_t>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

bool grad_enabled();

}  // namespace detail

/// Turns off tape recording for the enclosing scope. Forward passes under the
/// guard allocate no graph nodes beyond the results themselves.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major tensor participating in a dynamically built reverse-mode
/// differentiation graph. Copies are shallow: they alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> data);  // 1 x N

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  int64_t size() const;
  int64_t rows() const;  // rank-2 only
  int64_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();  // leaf tensors only
  double at(int64_t r, int64_t c) const;
  double item() const;  // scalar (size-1) tensors

  bool requires_grad() const;
  void set_requires_grad(bool v);
  std::span<const double> grad() const;
  bool has_grad() const;
  void clear_grad();

  /// Reverse sweep from a scalar. Gradients accumulate across repeated calls.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward);
};

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward);

enum class Activation { identity, relu, gelu };

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Rank-2 linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // v broadcast over rows

/// Row-wise softmax with max subtraction; each output row sums to 1.
Tensor softmax_rows(const Tensor& m);
/// Row-wise log-softmax in fused max-subtracted form.
Tensor log_softmax_rows(const Tensor& m);
/// L x D -> 1 x 2D: column-wise max concatenated with column-wise mean.
/// Max routes its gradient to the lowest-index argmax row per column.
Tensor pool_max_avg(const Tensor& m);
Tensor logsumexp_cols(const Tensor& row);  // 1 x M -> 1 x 1

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);
Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end);

Tensor mean_rows(const Tensor& a);  // R x C -> 1 x C
Tensor sum_all(const Tensor& a);    // -> 1 x 1
Tensor mean_all(const Tensor& a);   // -> 1 x 1

/// Gathers rows of `table` by id. Backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

/// Row-wise layer normalization with learned gain/bias (both 1 x C).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-12);

/// Affine map plus activation; x is (R x Din), w is (Din x Dout), b is (1 x Dout).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b,
              Activation act = Activation::relu);

/// Inverted dropout: zero each element with probability `rate` and scale
/// survivors by 1/(1-rate). Identity when not training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng* rng);
Tensor dropout(const Tensor& x, const ForwardCtx& ctx);

bool all_finite(const Tensor& t);

}  // namespace mgimn
