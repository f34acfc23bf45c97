#pragma once

#include "cdasr/io.hpp"

namespace cdasr::s2s {

/// Piecewise learning-rate schedule: linear warmup from 0, constant hold, linear decay, constant floor.
struct LRSchedule {
  long warmup_steps = 500;
  double peak_rate = 1e-3;
  long hold_steps = 150000;
  long decay_steps = 260000;
  double floor_rate = 1e-5;

  /// Same shape with phase lengths scaled so that warmup+hold+decay spans `total_steps`.
  static LRSchedule scaled_to(long total_steps, double peak_rate, double floor_rate);

  long total_steps() const { return warmup_steps + hold_steps + decay_steps; }

  static LRSchedule from_json(const json& j);
  json to_json() const;
};

double lr_at(const LRSchedule& s, long step);

}  // namespace cdasr::s2s
