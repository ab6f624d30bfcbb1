#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgimn {

enum class ErrorKind {
  config,
  data,
  shape,
  state,
  sampling,
  parse,
  io,
  check,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::shape: return "shape";
    case ErrorKind::state: return "state";
    case ErrorKind::sampling: return "sampling";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    case ErrorKind::check: return "check";
  }
  return "unknown";
}

/// Deterministic RNG. All randomness in the project flows through this so
/// that runs are reproducible bit-for-bit across platforms; the scalar
/// helpers avoid std::uniform_* distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int64_t uniform_int(int64_t n) {
    if (n <= 0) fail(ErrorKind::sampling, "uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t mask = ~uint64_t{0};
    if (un < (uint64_t{1} << 63)) {
      uint64_t pow2 = 1;
      while (pow2 < un) pow2 <<= 1;
      mask = pow2 - 1;
    }
    for (;;) {
      uint64_t v = next_u64() & mask;
      if (v < un) return static_cast<int64_t>(v);
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<int64_t> sample_indices(int64_t n, int64_t k) {
    if (k > n) fail(ErrorKind::sampling, "sample_indices: k > n");
    std::vector<int64_t> pool(n);
    for (int64_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<int64_t> out;
    out.reserve(k);
    for (int64_t i = 0; i < k; ++i) {
      int64_t j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

/// Derives an independent stream seed from a base seed and a stream tag.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng;

/// Per-forward-pass mode: dropout is active only when training is set and a
/// dropout rng is supplied.
struct ForwardCtx {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardCtx eval() { return ForwardCtx{}; }
  static ForwardCtx train(double rate, Rng& rng) {
    return ForwardCtx{true, rate, &rng};
  }
};

}  // namespace mgimn
