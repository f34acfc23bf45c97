#include "cdasr/s2s/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace cdasr::s2s {

double lr_at(const LRSchedule& s, long step) {
  if (step < 0) throw Error("lr_at: negative step");
  if (step < s.warmup_steps) return s.peak_rate * double(step) / double(s.warmup_steps);
  step -= s.warmup_steps;
  if (step < s.hold_steps) return s.peak_rate;
  step -= s.hold_steps;
  if (step < s.decay_steps) return s.peak_rate + (s.floor_rate - s.peak_rate) * double(step) / double(s.decay_steps);
  return s.floor_rate;
}

LRSchedule LRSchedule::scaled_to(long total_steps, double peak_rate, double floor_rate) {
  // Keep the hold:decay proportion of the 150K/260K recipe; warmup gets a fixed small share.
  LRSchedule s;
  s.peak_rate = peak_rate;
  s.floor_rate = floor_rate;
  s.warmup_steps = std::max(1L, total_steps / 20);
  long rest = std::max(2L, total_steps - s.warmup_steps);
  s.hold_steps = std::lround(rest * 150.0 / 410.0);
  s.decay_steps = rest - s.hold_steps;
  return s;
}

LRSchedule LRSchedule::from_json(const json& j) {
  LRSchedule s;
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  s.peak_rate = j.value("peak_rate", s.peak_rate);
  s.hold_steps = j.value("hold_steps", s.hold_steps);
  s.decay_steps = j.value("decay_steps", s.decay_steps);
  s.floor_rate = j.value("floor_rate", s.floor_rate);
  return s;
}

json LRSchedule::to_json() const {
  return {{"warmup_steps", warmup_steps},
          {"peak_rate", peak_rate},
          {"hold_steps", hold_steps},
          {"decay_steps", decay_steps},
          {"floor_rate", floor_rate}};
}

}  // namespace cdasr::s2s
