#pragma once

#include "cdasr/io.hpp"

namespace cdasr::s2s {

struct SpecAugmentPolicy {
  int freq_mask_width = 4;  // F
  int freq_mask_count = 1;  // mF
  int time_mask_width = 20; // T
  int time_mask_count = 2;  // mT
  double max_time_mask_fraction = 0.2;  // p

  void validate() const;
  bool is_identity() const;
  static SpecAugmentPolicy none() { return {0, 0, 0, 0, 0.0}; }
  static SpecAugmentPolicy from_json(const json& j);
  json to_json() const;
};

struct MaskSpan {
  int start = 0;
  int width = 0;
};

/// Masks actually drawn by one application, in draw order.
struct SpecAugmentTrace {
  std::vector<MaskSpan> freq_masks;
  std::vector<MaskSpan> time_masks;
  float fill = 0;
};

/// Frequency masks have width ~ U[0, F]; time masks have width ~ U[0, min(T, floor(p N / mT))],
/// so the masked frames never exceed p N in total. Masked cells take the utterance mean.
FeatureMatrix spec_augment(const FeatureMatrix& features, const SpecAugmentPolicy& policy, uint64_t seed,
                           SpecAugmentTrace* trace = nullptr);

}  // namespace cdasr::s2s
