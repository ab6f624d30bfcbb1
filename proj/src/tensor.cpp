#include "mgimn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mgimn {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) {
  detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

namespace {

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) fail(ErrorKind::shape, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " +
                               shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    fail(ErrorKind::shape,
         std::string(op) + ": expected rank-2 input, got " + shape_str(a.shape()));
}

// out[m x n] += a[m x k] * b[k x n]
void matmul_acc(const double* a, const double* b, double* out, int64_t m,
                int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      double* orow = out + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out[i * n + j] += s;
    }
  }
}

// out[m x n] += a[k x m]^T * b[k x n]
void matmul_tn_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  if (shape_size(shape) != static_cast<int64_t>(value.size()))
    fail(ErrorKind::shape, "make_op: value length does not match shape");
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool track = detail::grad_enabled();
  bool any_grad = false;
  if (track) {
    for (const auto& p : parents)
      if (p.defined() && p.requires_grad()) any_grad = true;
  }
  if (track && any_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->value.assign(shape_size(shape), v);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(data.size()))
    fail(ErrorKind::shape, "from_data: data length does not match shape");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> data) {
  int64_t n = static_cast<int64_t>(data.size());
  return from_data({1, n}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!node_) fail(ErrorKind::state, "use of undefined tensor");
  return node_->shape;
}

int64_t Tensor::size() const { return node_ ? node_->size() : 0; }

int64_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape()[0];
}

int64_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape()[1];
}

std::span<const double> Tensor::data() const {
  if (!node_) fail(ErrorKind::state, "use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) fail(ErrorKind::state, "use of undefined tensor");
  if (!node_->parents.empty())
    fail(ErrorKind::state, "mutable_data is only valid on leaf tensors");
  return node_->value;
}

double Tensor::at(int64_t r, int64_t c) const {
  require_rank2(*this, "at");
  return node_->value[r * shape()[1] + c];
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::shape, "item: tensor is not scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const {
  return node_ && node_->requires_grad;
}

void Tensor::set_requires_grad(bool v) {
  if (!node_) fail(ErrorKind::state, "use of undefined tensor");
  if (v && !node_->parents.empty())
    fail(ErrorKind::state, "requires_grad can only be set on leaf tensors");
  node_->requires_grad = v;
}

std::span<const double> Tensor::grad() const {
  if (!node_) fail(ErrorKind::state, "use of undefined tensor");
  if (node_->grad.empty())
    fail(ErrorKind::state, "tensor has no gradient; run backward first");
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() const {
  if (!node_) fail(ErrorKind::state, "backward on undefined tensor");
  if (size() != 1)
    fail(ErrorKind::shape, "backward requires a scalar loss, got " +
                               shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order topological sort over the reachable graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      detail::Node* p = n->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior nodes get a fresh sweep; leaf gradients accumulate across calls.
  for (detail::Node* n : order)
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward(*n);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise operations

namespace {

template <class Fwd, class Bwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (int64_t i = 0; i < a.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn, bwd](detail::Node& n) {
                   for (size_t i = 0; i < n.value.size(); ++i) {
                     double g = n.grad[i];
                     double da, db;
                     bwd(an->value[i], bn->value[i], g, da, db);
                     if (an->requires_grad) an->grad[i] += da;
                     if (bn->requires_grad) bn->grad[i] += db;
                   }
                 });
}

template <class Fwd, class Deriv>
Tensor elementwise_unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  auto av = a.data();
  for (int64_t i = 0; i < a.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a},
                 [an, deriv](detail::Node& n) {
                   for (size_t i = 0; i < n.value.size(); ++i)
                     an->grad[i] += n.grad[i] * deriv(an->value[i], n.value[i]);
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor scale(const Tensor& a, double s) {
  return elementwise_unary(
      a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Tensor abs(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return elementwise_unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor sqrt(const Tensor& a) {
  return elementwise_unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// ---------------------------------------------------------------------------
// Rank-2 linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    fail(ErrorKind::shape, "matmul: inner dimensions differ " +
                               shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  matmul_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](detail::Node& node) {
                   if (an->requires_grad)  // dA = G * B^T
                     matmul_nt_acc(node.grad.data(), bn->value.data(),
                                   an->grad.data(), m, n, k);
                   if (bn->requires_grad)  // dB = A^T * G
                     matmul_tn_acc(an->value.data(), node.grad.data(),
                                   bn->grad.data(), k, m, n);
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k)
    fail(ErrorKind::shape, "matmul_nt: inner dimensions differ " +
                               shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  matmul_nt_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](detail::Node& node) {
                   if (an->requires_grad)  // dA = G * B
                     matmul_acc(node.grad.data(), bn->value.data(),
                                an->grad.data(), m, n, k);
                   if (bn->requires_grad)  // dB = G^T * A
                     matmul_tn_acc(node.grad.data(), an->value.data(),
                                   bn->grad.data(), n, m, k);
                 });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  int64_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  auto av = a.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  auto an = a.node();
  return make_op({c, r}, std::move(out), {a},
                 [an, r, c](detail::Node& node) {
                   for (int64_t i = 0; i < r; ++i)
                     for (int64_t j = 0; j < c; ++j)
                       an->grad[i * c + j] += node.grad[j * r + i];
                 });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "add_rowvec");
  require_rank2(v, "add_rowvec");
  int64_t r = m.shape()[0], c = m.shape()[1];
  if (v.shape()[0] != 1 || v.shape()[1] != c)
    fail(ErrorKind::shape, "add_rowvec: vector shape " + shape_str(v.shape()) +
                               " does not broadcast over " + shape_str(m.shape()));
  std::vector<double> out(r * c);
  auto mv = m.data();
  auto vv = v.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = mv[i * c + j] + vv[j];
  auto mn = m.node();
  auto vn = v.node();
  return make_op({r, c}, std::move(out), {m, v},
                 [mn, vn, r, c](detail::Node& node) {
                   if (mn->requires_grad)
                     for (int64_t i = 0; i < r * c; ++i)
                       mn->grad[i] += node.grad[i];
                   if (vn->requires_grad)
                     for (int64_t i = 0; i < r; ++i)
                       for (int64_t j = 0; j < c; ++j)
                         vn->grad[j] += node.grad[i * c + j];
                 });
}

// ---------------------------------------------------------------------------
// Softmax family

Tensor softmax_rows(const Tensor& m) {
  require_rank2(m, "softmax_rows");
  int64_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(r * c);
  auto mv = m.data();
  for (int64_t i = 0; i < r; ++i) {
    const double* row = mv.data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double e = std::exp(row[j] - mx);
      out[i * c + j] = e;
      sum += e;
    }
    for (int64_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  auto mn = m.node();
  return make_op({r, c}, std::move(out), {m},
                 [mn, r, c](detail::Node& node) {
                   for (int64_t i = 0; i < r; ++i) {
                     const double* p = node.value.data() + i * c;
                     const double* g = node.grad.data() + i * c;
                     double dot = 0.0;
                     for (int64_t j = 0; j < c; ++j) dot += p[j] * g[j];
                     double* dm = mn->grad.data() + i * c;
                     for (int64_t j = 0; j < c; ++j)
                       dm[j] += p[j] * (g[j] - dot);
                   }
                 });
}

Tensor log_softmax_rows(const Tensor& m) {
  require_rank2(m, "log_softmax_rows");
  int64_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(r * c);
  auto mv = m.data();
  for (int64_t i = 0; i < r; ++i) {
    const double* row = mv.data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  auto mn = m.node();
  return make_op({r, c}, std::move(out), {m},
                 [mn, r, c](detail::Node& node) {
                   for (int64_t i = 0; i < r; ++i) {
                     const double* lo = node.value.data() + i * c;
                     const double* g = node.grad.data() + i * c;
                     double gsum = 0.0;
                     for (int64_t j = 0; j < c; ++j) gsum += g[j];
                     double* dm = mn->grad.data() + i * c;
                     for (int64_t j = 0; j < c; ++j)
                       dm[j] += g[j] - std::exp(lo[j]) * gsum;
                   }
                 });
}

Tensor logsumexp_cols(const Tensor& row) {
  require_rank2(row, "logsumexp_cols");
  if (row.shape()[0] != 1)
    fail(ErrorKind::shape, "logsumexp_cols expects a 1 x M tensor");
  int64_t c = row.shape()[1];
  auto v = row.data();
  double mx = v[0];
  for (int64_t j = 1; j < c; ++j) mx = std::max(mx, v[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < c; ++j) sum += std::exp(v[j] - mx);
  double lse = mx + std::log(sum);
  auto rn = row.node();
  return make_op({1, 1}, {lse}, {row},
                 [rn, c](detail::Node& node) {
                   double g = node.grad[0];
                   double lse = node.value[0];
                   for (int64_t j = 0; j < c; ++j)
                     rn->grad[j] += g * std::exp(rn->value[j] - lse);
                 });
}

Tensor pool_max_avg(const Tensor& m) {
  require_rank2(m, "pool_max_avg");
  int64_t r = m.shape()[0], c = m.shape()[1];
  if (r < 1) fail(ErrorKind::shape, "pool_max_avg: empty input");
  std::vector<double> out(2 * c);
  std::vector<int64_t> argmax(c, 0);
  auto mv = m.data();
  for (int64_t j = 0; j < c; ++j) {
    double best = mv[j];
    int64_t bi = 0;
    double sum = mv[j];
    for (int64_t i = 1; i < r; ++i) {
      double x = mv[i * c + j];
      sum += x;
      if (x > best) {  // strict: ties keep the lowest row index
        best = x;
        bi = i;
      }
    }
    out[j] = best;
    out[c + j] = sum / static_cast<double>(r);
    argmax[j] = bi;
  }
  auto mn = m.node();
  return make_op({1, 2 * c}, std::move(out), {m},
                 [mn, r, c, argmax = std::move(argmax)](detail::Node& node) {
                   double invr = 1.0 / static_cast<double>(r);
                   for (int64_t j = 0; j < c; ++j) {
                     mn->grad[argmax[j] * c + j] += node.grad[j];
                     double g = node.grad[c + j] * invr;
                     for (int64_t i = 0; i < r; ++i) mn->grad[i * c + j] += g;
                   }
                 });
}

// ---------------------------------------------------------------------------
// Shape surgery

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_rows: no inputs");
  int64_t c = parts[0].cols();
  int64_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != c) fail(ErrorKind::shape, "concat_rows: column mismatch");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) {
    auto v = p.data();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_op({total, c}, std::move(out), parts,
                 [nodes](detail::Node& node) {
                   size_t off = 0;
                   for (auto& pn : nodes) {
                     size_t len = pn->value.size();
                     if (pn->requires_grad)
                       for (size_t i = 0; i < len; ++i)
                         pn->grad[i] += node.grad[off + i];
                     off += len;
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_cols: no inputs");
  int64_t r = parts[0].rows();
  int64_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r) fail(ErrorKind::shape, "concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<double> out(r * total);
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t pc = p.cols();
    auto v = p.data();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < pc; ++j) out[i * total + off + j] = v[i * pc + j];
    off += pc;
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.cols());
  }
  return make_op({r, total}, std::move(out), parts,
                 [nodes, widths, r, total](detail::Node& node) {
                   int64_t off = 0;
                   for (size_t k = 0; k < nodes.size(); ++k) {
                     int64_t pc = widths[k];
                     if (nodes[k]->requires_grad)
                       for (int64_t i = 0; i < r; ++i)
                         for (int64_t j = 0; j < pc; ++j)
                           nodes[k]->grad[i * pc + j] +=
                               node.grad[i * total + off + j];
                     off += pc;
                   }
                 });
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
  require_rank2(a, "slice_rows");
  int64_t r = a.shape()[0], c = a.shape()[1];
  if (begin < 0 || end > r || begin >= end)
    fail(ErrorKind::shape, "slice_rows: invalid range");
  std::vector<double> out(a.data().begin() + begin * c,
                          a.data().begin() + end * c);
  auto an = a.node();
  return make_op({end - begin, c}, std::move(out), {a},
                 [an, begin, c](detail::Node& node) {
                   for (size_t i = 0; i < node.value.size(); ++i)
                     an->grad[begin * c + i] += node.grad[i];
                 });
}

Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end) {
  require_rank2(a, "slice_cols");
  int64_t r = a.shape()[0], c = a.shape()[1];
  if (begin < 0 || end > c || begin >= end)
    fail(ErrorKind::shape, "slice_cols: invalid range");
  int64_t w = end - begin;
  std::vector<double> out(r * w);
  auto av = a.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < w; ++j) out[i * w + j] = av[i * c + begin + j];
  auto an = a.node();
  return make_op({r, w}, std::move(out), {a},
                 [an, begin, c, r, w](detail::Node& node) {
                   for (int64_t i = 0; i < r; ++i)
                     for (int64_t j = 0; j < w; ++j)
                       an->grad[i * c + begin + j] += node.grad[i * w + j];
                 });
}

Tensor mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  int64_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(c, 0.0);
  auto av = a.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  for (int64_t j = 0; j < c; ++j) out[j] /= static_cast<double>(r);
  auto an = a.node();
  return make_op({1, c}, std::move(out), {a},
                 [an, r, c](detail::Node& node) {
                   double invr = 1.0 / static_cast<double>(r);
                   for (int64_t i = 0; i < r; ++i)
                     for (int64_t j = 0; j < c; ++j)
                       an->grad[i * c + j] += node.grad[j] * invr;
                 });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  return make_op({1, 1}, {s}, {a},
                 [an](detail::Node& node) {
                   double g = node.grad[0];
                   for (auto& gv : an->grad) gv += g;
                 });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  int64_t n = a.size();
  auto an = a.node();
  return make_op({1, 1}, {s / static_cast<double>(n)}, {a},
                 [an, n](detail::Node& node) {
                   double g = node.grad[0] / static_cast<double>(n);
                   for (auto& gv : an->grad) gv += g;
                 });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_lookup");
  int64_t v = table.shape()[0], d = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= v)
      fail(ErrorKind::data, "embedding_lookup: id " + std::to_string(id) +
                                " outside vocabulary of size " + std::to_string(v));
  int64_t l = static_cast<int64_t>(ids.size());
  if (l == 0) fail(ErrorKind::shape, "embedding_lookup: empty id list");
  std::vector<double> out(l * d);
  auto tv = table.data();
  for (int64_t i = 0; i < l; ++i)
    std::copy_n(tv.data() + static_cast<int64_t>(ids[i]) * d, d,
                out.data() + i * d);
  auto tn = table.node();
  return make_op({l, d}, std::move(out), {table},
                 [tn, ids, d](detail::Node& node) {
                   for (size_t i = 0; i < ids.size(); ++i) {
                     double* dst = tn->grad.data() +
                                   static_cast<int64_t>(ids[i]) * d;
                     const double* src = node.grad.data() + i * d;
                     for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  require_rank2(x, "layer_norm_rows");
  int64_t r = x.shape()[0], c = x.shape()[1];
  if (gain.shape() != Shape{1, c} || bias.shape() != Shape{1, c})
    fail(ErrorKind::shape, "layer_norm_rows: gain/bias must be 1 x cols");
  std::vector<double> out(r * c);
  std::vector<double> inv_std(r);
  std::vector<double> xhat(r * c);
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (int64_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mean = 0.0;
    for (int64_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int64_t j = 0; j < c; ++j) {
      double xh = (row[j] - mean) * is;
      xhat[i * c + j] = xh;
      out[i * c + j] = gv[j] * xh + bv[j];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op(
      {r, c}, std::move(out), {x, gain, bias},
      [xn, gn, bn, r, c, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](detail::Node& node) {
        for (int64_t i = 0; i < r; ++i) {
          const double* g = node.grad.data() + i * c;
          const double* xh = xhat.data() + i * c;
          if (gn->requires_grad)
            for (int64_t j = 0; j < c; ++j) gn->grad[j] += g[j] * xh[j];
          if (bn->requires_grad)
            for (int64_t j = 0; j < c; ++j) bn->grad[j] += g[j];
          if (xn->requires_grad) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int64_t j = 0; j < c; ++j) {
              double dxh = g[j] * gn->value[j];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xh[j];
            }
            double invc = 1.0 / static_cast<double>(c);
            for (int64_t j = 0; j < c; ++j) {
              double dxh = g[j] * gn->value[j];
              xn->grad[i * c + j] +=
                  inv_std[i] *
                  (dxh - invc * sum_dxh - xh[j] * invc * sum_dxh_xh);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b,
              Activation act) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  if (x.shape()[1] != w.shape()[0])
    fail(ErrorKind::shape, "linear: input width " + shape_str(x.shape()) +
                               " does not match weights " + shape_str(w.shape()));
  Tensor y = add_rowvec(matmul(x, w), b);
  switch (act) {
    case Activation::identity: return y;
    case Activation::relu: return relu(y);
    case Activation::gelu: return gelu(y);
  }
  return y;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0)
    fail(ErrorKind::config, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  if (rng == nullptr)
    fail(ErrorKind::state, "dropout in training mode requires an rng");
  double keep = 1.0 - rate;
  double inv_keep = 1.0 / keep;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = (rng->uniform() >= rate) ? inv_keep : 0.0;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[i] = xv[i] * mask[i];
  auto xn = x.node();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, mask = std::move(mask)](detail::Node& node) {
                   for (size_t i = 0; i < node.value.size(); ++i)
                     xn->grad[i] += node.grad[i] * mask[i];
                 });
}

Tensor dropout(const Tensor& x, const ForwardCtx& ctx) {
  return dropout(x, ctx.dropout, ctx.training, ctx.rng);
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace mgimn
