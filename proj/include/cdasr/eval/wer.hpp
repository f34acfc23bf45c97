#pragma once

#include "cdasr/common.hpp"
#include "cdasr/corpus/corpus.hpp"

#include <map>

namespace cdasr::eval {

struct WERBreakdown {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_len = 0;

  long edits() const { return substitutions + deletions + insertions; }
  double wer_percent() const;
  WERBreakdown& operator+=(const WERBreakdown& o);
};

/// Levenshtein alignment with unit costs. Among minimum-cost alignments the one with the most
/// substitutions is taken, which fixes the breakdown and makes it symmetric under swapping ref and hyp.
WERBreakdown wer(const WordSeq& ref, const WordSeq& hyp);

struct EvalScore {
  std::map<corpus::EvalSubset, WERBreakdown> subsets;  // pooled counts per subset
  double average = 0;                                  // unweighted mean of subset WERs
};

/// Pooled WER per eval subset and their mean. Throws listing any utterance without a hypothesis.
EvalScore score_eval(const std::map<std::string, WordSeq>& hypotheses, const std::vector<corpus::Utterance>& eval);

/// Unweighted mean rounded half away from zero to one decimal.
double average_across(const std::vector<double>& values);

double round1(double x);

}  // namespace cdasr::eval
