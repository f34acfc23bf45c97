#pragma once

#include "cdasr/nn/params.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace cdasr::nn {

struct GradCheckResult {
  std::string param;
  double relative_error = 0.0;
  int entries_checked = 0;
};

/// Compares analytic gradients against central finite differences, per parameter tensor.
///
/// `loss` must zero nothing itself: it evaluates the objective and, when `with_grad` is true,
/// accumulates gradients into the parameter set. Relative error is ||a - n|| / max(||a||, ||n||)
/// over the checked entries.
inline std::vector<GradCheckResult> check_gradients(ParamSet<double>& ps,
                                                    const std::function<double(bool with_grad)>& loss,
                                                    int max_entries = 12, double eps = 1e-6, uint64_t seed = 7) {
  ps.zero_grad();
  loss(true);
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  for (const auto& p : ps.all()) {
    std::vector<Eigen::Index> idx(p->value.size());
    for (Eigen::Index k = 0; k < p->value.size(); ++k) idx[k] = k;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (static_cast<int>(idx.size()) > max_entries) idx.resize(max_entries);
    double diff = 0, an = 0, nn = 0;
    for (Eigen::Index k : idx) {
      double& x = p->value.data()[k];
      const double orig = x;
      x = orig + eps;
      double up = loss(false);
      x = orig - eps;
      double down = loss(false);
      x = orig;
      double numeric = (up - down) / (2 * eps);
      double analytic = p->grad.data()[k];
      diff += (numeric - analytic) * (numeric - analytic);
      an += analytic * analytic;
      nn += numeric * numeric;
    }
    double denom = std::max({std::sqrt(an), std::sqrt(nn), 1e-6});
    out.push_back({p->name, std::sqrt(diff) / denom, static_cast<int>(idx.size())});
  }
  return out;
}

}  // namespace cdasr::nn
