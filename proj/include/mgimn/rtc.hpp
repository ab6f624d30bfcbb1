#pragma once

#include <functional>
#include <map>

#include "mgimn/episodes.hpp"
#include "mgimn/model.hpp"

namespace mgimn {

enum class RetrieverMode { mean_vector, bm25 };

struct RtcConfig {
  int64_t retrieve_n = 10;
  int64_t shots_k = 5;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  RetrieverMode mode = RetrieverMode::mean_vector;
};

/// First-stage index over one fixed support pool: every class contributes K
/// support instances; the class representation is either the mean of their
/// pooled encoder vectors or BM25 statistics over the concatenated texts.
struct RetrievalIndex {
  RetrieverMode mode = RetrieverMode::mean_vector;
  std::vector<int> class_ids;                    // ascending, covers all classes
  std::vector<std::vector<int64_t>> support;     // per class: K instance indices
  Tensor class_vectors;                          // C x D (mean-vector mode)
  std::vector<std::map<std::string, int64_t>> term_freq;  // per class document
  std::map<std::string, int64_t> doc_freq;
  std::vector<int64_t> doc_len;
  double avg_doc_len = 0.0;
};

using SentenceEncoder = std::function<std::vector<double>(const std::string&)>;

/// Selects K support instances per class (seeded) and builds the stage-1
/// statistics. The encoder callback is only used in mean-vector mode.
RetrievalIndex build_index(const Dataset& ds, const RtcConfig& cfg,
                           const SentenceEncoder& encode, Rng& rng);

/// Top retrieve_n class ids by score, ties broken by ascending id;
/// retrieve_n larger than C is clamped with a warning on stderr.
std::vector<int> retrieve(const std::string& query, const RetrievalIndex& index,
                          const RtcConfig& cfg, const SentenceEncoder& encode);

double bm25_score(const std::vector<std::string>& query_terms,
                  const RetrievalIndex& index, int64_t class_pos,
                  const RtcConfig& cfg);

/// Two-stage classification: retrieve, then run the model on an episode over
/// the retrieved classes (ascending id order, same construction as the full
/// path) built from the index's support instances. Returns the dataset class
/// id.
int rtc_classify(const std::string& query, const Dataset& ds,
                 const RetrievalIndex& index, const FewShotModel& model,
                 const Vocabulary& vocab, int64_t max_seq_len,
                 const RtcConfig& cfg);

/// JSON manifest plus binary class vectors in the checkpoint container.
void save_index(const RetrievalIndex& index, const std::string& manifest_path,
                const std::string& vectors_path);
RetrievalIndex load_index(const std::string& manifest_path);

}  // namespace mgimn
