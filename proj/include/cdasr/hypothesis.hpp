#pragma once

#include "cdasr/common.hpp"

namespace cdasr {

/// Decoder output. For modular decodes `units` holds alphabet labels; for seq2seq, subword ids.
/// total_score = am_score + lm_weight * lm_score + word_insertion * words.size() (modular),
/// or the fused sequence score divided by the output length including </s> (seq2seq).
struct Hypothesis {
  WordSeq words;
  std::vector<int> units;
  double am_score = 0;
  double lm_score = 0;
  double total_score = 0;
};

}  // namespace cdasr
