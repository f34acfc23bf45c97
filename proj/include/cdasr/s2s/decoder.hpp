#pragma once

#include "cdasr/hypothesis.hpp"
#include "cdasr/s2s/model.hpp"
#include "cdasr/text/neural_lm.hpp"

#include <climits>
#include <optional>

namespace cdasr::s2s {

inline constexpr int kUnlimitedBeam = INT_MAX;

struct Fusion {
  const text::NeuralLM* lm = nullptr;
  double weight = 0.0;
};

struct Seq2SeqDecodeConfig {
  int beam = 4;
  int max_length = 0;  // output units before the forced </s>; 0 = reduced frame count
  std::optional<Fusion> fusion;

  static Seq2SeqDecodeConfig from_json(const json& j);
  json to_json() const;  // fusion is not serialized
};

/// Beam search over units. Step score = log P_model + w log P_lm; hypotheses end on </s>; the
/// final choice ranks complete hypotheses by total score divided by their length (units + </s>).
/// The result is the best over every width up to `beam`, so its score never decreases with the beam.
/// am_score and lm_score are unnormalized sums; total_score is the normalized ranking score.
Hypothesis s2s_decode(const Seq2SeqModel& model, const FeatureMatrix& features, const Seq2SeqDecodeConfig& cfg);

/// Same search on an already encoded utterance.
Hypothesis s2s_decode_encoded(const Seq2SeqModel& model, const Seq2SeqNet<float>::Encoded& encoded,
                              const Seq2SeqDecodeConfig& cfg);

/// Batched encoding, then one search per utterance.
std::vector<Hypothesis> s2s_decode_batch(const Seq2SeqModel& model, const std::vector<const FeatureMatrix*>& feats,
                                         const Seq2SeqDecodeConfig& cfg);

}  // namespace cdasr::s2s
