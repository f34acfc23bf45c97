#pragma once

#include "cdasr/hypothesis.hpp"
#include "cdasr/modular/ctc.hpp"
#include "cdasr/text/lexicon.hpp"
#include "cdasr/text/ngram.hpp"

namespace cdasr::modular {

inline constexpr int kUnlimitedBeam = std::numeric_limits<int>::max();

struct ModularDecodeConfig {
  int beam = 16;
  double lm_weight = 0.5;
  double word_insertion = 0.0;

  static ModularDecodeConfig from_json(const json& j);
  json to_json() const;
};

/// Prefix beam search over a grapheme trie of the lexicon. The LM (weighted) and the word
/// insertion term enter at each word completion; complete candidates are rescored with the
/// exact CTC forward score before the final choice. The result is the best over every width
/// up to `beam`, so the returned score never decreases as the beam grows.
class ModularDecoder {
 public:
  ModularDecoder(const text::Lexicon& lexicon, const text::NGramLM& lm, const Alphabet& alphabet,
                 ModularDecodeConfig cfg);

  Hypothesis decode(const Eigen::Ref<const MatrixXd>& log_posteriors) const;
  const ModularDecodeConfig& config() const { return cfg_; }

 private:
  struct TrieNode {
    std::vector<std::pair<int, int>> children;  // (label, node), sorted by label
    int word = -1;                               // lexicon index ending here
  };

  Hypothesis search(const Eigen::Ref<const MatrixXd>& log_posteriors, int width) const;
  double word_logprob(int older, int prev, int word_index) const;
  double end_logprob(int older, int prev) const;

  const text::NGramLM* lm_;
  Alphabet alphabet_;
  ModularDecodeConfig cfg_;
  std::vector<std::string> words_;
  std::vector<int> lm_ids_;  // LM id per lexicon word, or <unk>
  std::vector<bool> oov_;
  int oov_class_size_ = 1;
  std::vector<TrieNode> trie_;
};

Hypothesis decode_modular(const Eigen::Ref<const MatrixXd>& log_posteriors, const text::Lexicon& lexicon,
                          const text::NGramLM& lm, const Alphabet& alphabet, const ModularDecodeConfig& cfg);

}  // namespace cdasr::modular
