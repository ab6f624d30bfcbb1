#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mgimn/common.hpp"

namespace mgimn {

/// Token-to-id map with three reserved entries. Ids are contiguous; unknown
/// tokens resolve to UNK.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  Vocabulary();  // reserved entries only

  /// Builds from a corpus keeping tokens with frequency >= min_count, ids
  /// assigned by descending frequency then lexicographic order.
  static Vocabulary build(const std::vector<std::string>& corpus,
                          int64_t min_count = 1);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }

  /// One non-reserved token per line; the token on line k has id k + 3.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void push(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercases and splits on whitespace; punctuation characters form
/// single-character tokens.
std::vector<std::string> split_tokens(const std::string& text);

struct TokenSeq {
  std::vector<int> ids;  // CLS first; entries beyond `length` are PAD
  int64_t length = 0;    // non-PAD count, including CLS
  bool degenerate = false;
};

/// CLS-prefixed id sequence, truncated so that the total length never
/// exceeds max_seq_len. Empty input degenerates to [CLS, UNK].
TokenSeq tokenize(const std::string& text, const Vocabulary& vocab,
                  int64_t max_seq_len);

}  // namespace mgimn
