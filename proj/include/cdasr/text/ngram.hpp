#pragma once

#include "cdasr/common.hpp"
#include "cdasr/io.hpp"

#include <map>
#include <unordered_map>

namespace cdasr::text {

struct WeightedText {
  const std::vector<std::string>* sentences = nullptr;
  int duplication = 1;
};

/// Trigram back-off model with interpolated absolute discounting.
///
/// Scoring uses ARPA-style tables (probabilities of seen n-grams plus back-off weights), which
/// is an exact re-expression of the interpolated estimate. Log probabilities are natural log.
class NGramLM {
 public:
  static constexpr int kOrder = 3;
  static constexpr int kNone = -1;

  int order() const { return kOrder; }
  double discount() const { return discount_; }
  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  int id(const std::string& w) const;  // -1 for out-of-vocabulary
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int unk() const { return unk_; }
  bool contains(const std::string& w) const { return id(w) >= 0; }

  /// log P(word | older, prev); older may be kNone, prev may be kNone (unigram).
  double logprob_ids(int older, int prev, int word) const;

  /// Raw counts; empty when the model was loaded from ARPA.
  const std::map<std::vector<int>, long long>& counts() const { return counts_; }

  void write_arpa(std::ostream& out) const;
  void save_arpa(const fs::path& path) const;
  static NGramLM read_arpa(std::istream& in);
  static NGramLM load_arpa(const fs::path& path);

  friend NGramLM train_ngram(const std::vector<WeightedText>& texts, double discount);

 private:
  struct Entry {
    double logp = 0;
    double backoff = 0;  // log back-off weight; 0 when the n-gram is never a history
  };
  static uint64_t key2(int a, int b) { return (uint64_t(a) << 21) | uint64_t(b); }
  static uint64_t key3(int a, int b, int c) { return (uint64_t(a) << 42) | (uint64_t(b) << 21) | uint64_t(c); }
  void index_vocab();

  double discount_ = 0.7;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> ids_;
  int bos_ = -1, eos_ = -1, unk_ = -1;
  std::vector<Entry> unigrams_;
  std::unordered_map<uint64_t, Entry> bigrams_;
  std::unordered_map<uint64_t, double> trigrams_;
  std::map<std::vector<int>, long long> counts_;
};

NGramLM train_ngram(const std::vector<WeightedText>& texts, double discount = 0.7);

/// Total scoring function. Out-of-vocabulary words receive P(<unk> | history) / oov_class_size.
double ngram_logprob(const NGramLM& lm, const WordSeq& history, const std::string& word, int oov_class_size = 1);

/// Sentence log probability including the end-of-sentence event.
double ngram_sentence_logprob(const NGramLM& lm, const WordSeq& words, int oov_class_size = 1);

}  // namespace cdasr::text
