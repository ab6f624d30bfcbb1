#include "mgimn/params.hpp"

#include <cmath>

namespace mgimn {

Tensor ParamSet::add(const std::string& name, Shape shape, Init init,
                     Rng& rng) {
  Tensor t;
  switch (init) {
    case Init::zeros:
      t = Tensor::zeros(shape, true);
      break;
    case Init::ones:
      t = Tensor::full(shape, 1.0, true);
      break;
    case Init::glorot_uniform: {
      if (shape.size() != 2)
        fail(ErrorKind::shape, "glorot init expects a matrix: " + name);
      double a = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      t = Tensor::zeros(shape, true);
      for (auto& v : t.mutable_data()) v = rng.uniform(-a, a);
      break;
    }
  }
  return add(name, t);
}

Tensor ParamSet::add(const std::string& name, Tensor value) {
  if (find(name) != nullptr)
    fail(ErrorKind::state, "duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.push_back(Entry{name, value, {}, {}});
  return value;
}

ParamSet::Entry* ParamSet::find(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const ParamSet::Entry* ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

int64_t ParamSet::param_count() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& e : entries_) e.value.clear_grad();
}

void adam_step(ParamSet& params, double lr, double beta1, double beta2,
               double eps) {
  if (lr <= 0.0) fail(ErrorKind::config, "adam_step: lr must be positive");
  for (auto& e : params.entries_)
    if (!e.value.has_grad())
      fail(ErrorKind::state,
           "adam_step: parameter '" + e.name + "' has no gradient");

  params.step_ += 1;
  double t = static_cast<double>(params.step_);
  double bc1 = 1.0 - std::pow(beta1, t);
  double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& e : params.entries_) {
    auto g = e.value.grad();
    if (e.m.empty()) {
      e.m.assign(g.size(), 0.0);
      e.v.assign(g.size(), 0.0);
    }
    auto p = e.value.mutable_data();
    for (size_t i = 0; i < g.size(); ++i) {
      e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g[i];
      e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = e.m[i] / bc1;
      double vhat = e.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    e.value.clear_grad();
  }
}

Linear::Linear(const std::string& name, int64_t in, int64_t out, Activation act,
               ParamSet& params, Rng& rng, bool dropout_input, bool with_bias)
    : act(act), dropout_input(dropout_input) {
  w = params.add(name + ".w", {in, out}, Init::glorot_uniform, rng);
  if (with_bias) b = params.add(name + ".b", {1, out}, Init::zeros, rng);
}

Tensor Linear::apply(const Tensor& x, const ForwardCtx& ctx) const {
  Tensor in = dropout_input ? dropout(x, ctx) : x;
  if (!b.defined()) {
    Tensor y = matmul(in, w);
    switch (act) {
      case Activation::identity: return y;
      case Activation::relu: return relu(y);
      case Activation::gelu: return gelu(y);
    }
  }
  return linear(in, w, b, act);
}

LayerNorm::LayerNorm(const std::string& name, int64_t dim, ParamSet& params,
                     Rng& rng) {
  gain = params.add(name + ".gain", {1, dim}, Init::ones, rng);
  bias = params.add(name + ".bias", {1, dim}, Init::zeros, rng);
}

Tensor LayerNorm::apply(const Tensor& x) const {
  return layer_norm_rows(x, gain, bias);
}

}  // namespace mgimn
