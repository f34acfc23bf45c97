#include "cdasr/s2s/spec_augment.hpp"

#include <cmath>
#include <random>

namespace cdasr::s2s {

void SpecAugmentPolicy::validate() const {
  if (freq_mask_width < 0 || freq_mask_count < 0 || time_mask_width < 0 || time_mask_count < 0)
    throw Error("SpecAugment widths and counts must be non-negative");
  if (!(max_time_mask_fraction >= 0.0 && max_time_mask_fraction <= 1.0))
    throw Error("SpecAugment time mask fraction must lie in [0, 1]");
}

bool SpecAugmentPolicy::is_identity() const {
  return (freq_mask_count == 0 || freq_mask_width == 0) &&
         (time_mask_count == 0 || time_mask_width == 0 || max_time_mask_fraction == 0.0);
}

SpecAugmentPolicy SpecAugmentPolicy::from_json(const json& j) {
  SpecAugmentPolicy p;
  p.freq_mask_width = j.value("F", p.freq_mask_width);
  p.freq_mask_count = j.value("mF", p.freq_mask_count);
  p.time_mask_width = j.value("T", p.time_mask_width);
  p.time_mask_count = j.value("mT", p.time_mask_count);
  p.max_time_mask_fraction = j.value("p", p.max_time_mask_fraction);
  p.validate();
  return p;
}

json SpecAugmentPolicy::to_json() const {
  return {{"F", freq_mask_width},
          {"mF", freq_mask_count},
          {"T", time_mask_width},
          {"mT", time_mask_count},
          {"p", max_time_mask_fraction}};
}

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

FeatureMatrix spec_augment(const FeatureMatrix& features, const SpecAugmentPolicy& policy, uint64_t seed,
                           SpecAugmentTrace* trace) {
  policy.validate();
  FeatureMatrix out = features;
  if (trace) *trace = {};
  if (features.size() == 0) return out;
  const int frames = static_cast<int>(features.rows());
  const int dims = static_cast<int>(features.cols());
  const float fill = static_cast<float>(features.cast<double>().mean());
  std::mt19937_64 rng(seed);

  for (int k = 0; k < policy.freq_mask_count; ++k) {
    int width = uniform_int(rng, 0, std::min(policy.freq_mask_width, dims));
    int start = uniform_int(rng, 0, dims - width);
    out.middleCols(start, width).setConstant(fill);
    if (trace) trace->freq_masks.push_back({start, width});
  }

  int cap = 0;
  if (policy.time_mask_count > 0) {
    int budget = static_cast<int>(std::floor(policy.max_time_mask_fraction * frames + 1e-9));
    cap = std::min(policy.time_mask_width, budget / policy.time_mask_count);
  }
  for (int k = 0; k < policy.time_mask_count; ++k) {
    int width = uniform_int(rng, 0, cap);
    int start = uniform_int(rng, 0, frames - width);
    out.middleRows(start, width).setConstant(fill);
    if (trace) trace->time_masks.push_back({start, width});
  }
  if (trace) trace->fill = fill;
  return out;
}

}  // namespace cdasr::s2s
