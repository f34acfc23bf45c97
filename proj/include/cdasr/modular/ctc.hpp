#pragma once

#include "cdasr/common.hpp"

namespace cdasr::modular {

/// CTC label set: 0 = blank, 1 = word boundary, 2.. = graphemes.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::string graphemes);

  static constexpr int kBlank = 0;
  static constexpr int kBoundary = 1;

  int size() const { return static_cast<int>(graphemes_.size()) + 2; }
  const std::string& graphemes() const { return graphemes_; }
  int index(char grapheme) const;  // -1 if unknown
  char symbol(int label) const;

  /// Words joined by the boundary label. Throws on graphemes outside the alphabet.
  std::vector<int> labels_for(const WordSeq& words) const;
  bool spellable(const std::string& word) const;
  WordSeq words_from(const std::vector<int>& labels) const;

 private:
  std::string graphemes_;
};

/// Minimum number of frames that can emit `labels` (one extra frame per adjacent repeat).
int ctc_min_frames(const std::vector<int>& labels);

/// log P(labels | posteriors) summed over all blank-augmented monotone paths.
/// `log_posteriors` is frames x alphabet. Returns -inf when the labels cannot fit.
double ctc_forward_logprob_log(const Eigen::Ref<const MatrixXd>& log_posteriors, const std::vector<int>& labels);

/// Same, taking probabilities.
double ctc_forward_logprob(const Eigen::Ref<const MatrixXd>& posteriors, const std::vector<int>& labels);

/// Negative log-likelihood and its gradient with respect to the pre-softmax logits, given the
/// log-softmax outputs. Returns +inf (and leaves grad untouched) when unreachable.
double ctc_loss_with_grad(const Eigen::Ref<const MatrixXd>& log_posteriors, const std::vector<int>& labels,
                          MatrixXd* grad_logits);

/// Greedy frame collapse: per-frame argmax (ties go to blank), merge repeats, drop blanks.
std::vector<int> ctc_greedy(const Eigen::Ref<const MatrixXd>& log_posteriors);

}  // namespace cdasr::modular
