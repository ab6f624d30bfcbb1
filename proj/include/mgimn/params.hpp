#pragma once

#include <string>
#include <vector>

#include "mgimn/tensor.hpp"

namespace mgimn {

enum class Init { glorot_uniform, zeros, ones };

/// Ordered collection of named trainable tensors with per-entry Adam moments.
/// Registration order is the canonical order for checkpoints and reports.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
  };

  /// Registers a tensor; matrices draw from uniform(-a, a) with
  /// a = sqrt(6 / (rows + cols)), biases start at zero.
  Tensor add(const std::string& name, Shape shape, Init init, Rng& rng);
  Tensor add(const std::string& name, Tensor value);

  Entry* find(const std::string& name);
  const Entry* find(const std::string& name) const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  int64_t param_count() const;
  void zero_grads();

  friend void adam_step(ParamSet& params, double lr, double beta1,
                        double beta2, double eps);

 private:
  std::vector<Entry> entries_;
  int64_t step_ = 0;
};

/// One Adam update over every entry. Requires gradients from a prior backward
/// pass ('state' error otherwise); moments use bias correction and gradients
/// are cleared on completion.
void adam_step(ParamSet& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Single fully-connected layer. `dropout_input` applies inverted dropout to
/// the layer input when the forward context is in training mode. A layer
/// built with `with_bias = false` registers no bias tensor (attention Q/K/V
/// projections: a key bias cancels in softmax and a value bias is subsumed
/// by the output projection).
struct Linear {
  Tensor w;
  Tensor b;  // undefined when bias-free
  Activation act = Activation::relu;
  bool dropout_input = true;

  Linear() = default;
  Linear(const std::string& name, int64_t in, int64_t out, Activation act,
         ParamSet& params, Rng& rng, bool dropout_input = true,
         bool with_bias = true);

  Tensor apply(const Tensor& x, const ForwardCtx& ctx) const;
  int64_t in_dim() const { return w.shape()[0]; }
  int64_t out_dim() const { return w.shape()[1]; }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int64_t dim, ParamSet& params, Rng& rng);
  Tensor apply(const Tensor& x) const;
};

}  // namespace mgimn
