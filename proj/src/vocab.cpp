#include "mgimn/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace mgimn {

Vocabulary::Vocabulary() {
  push("[PAD]");
  push("[UNK]");
  push("[CLS]");
}

void Vocabulary::push(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus,
                             int64_t min_count) {
  if (corpus.empty()) fail(ErrorKind::data, "build_vocab: empty corpus");
  std::map<std::string, int64_t> counts;
  for (const auto& text : corpus)
    for (const auto& tok : split_tokens(text)) counts[tok] += 1;

  std::vector<std::pair<std::string, int64_t>> items(counts.begin(),
                                                     counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocabulary v;
  for (const auto& [tok, cnt] : items)
    if (cnt >= min_count) v.push(tok);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    fail(ErrorKind::data, "vocabulary id out of range: " + std::to_string(id));
  return tokens_[id];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open vocabulary for writing: " + path);
  for (int64_t i = 3; i < size(); ++i) out << tokens_[i] << "\n";
  if (!out) fail(ErrorKind::io, "failed writing vocabulary: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) v.push(line);
  return v;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && !std::isalnum(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

TokenSeq tokenize(const std::string& text, const Vocabulary& vocab,
                  int64_t max_seq_len) {
  if (max_seq_len < 2)
    fail(ErrorKind::config, "tokenize: max_seq_len must be at least 2");
  auto tokens = split_tokens(text);
  TokenSeq seq;
  seq.ids.push_back(Vocabulary::kCls);
  for (const auto& tok : tokens) {
    if (static_cast<int64_t>(seq.ids.size()) >= max_seq_len) break;
    seq.ids.push_back(vocab.id(tok));
  }
  if (seq.ids.size() == 1) {
    seq.ids.push_back(Vocabulary::kUnk);
    seq.degenerate = true;
  }
  seq.length = static_cast<int64_t>(seq.ids.size());
  return seq;
}

}  // namespace mgimn
