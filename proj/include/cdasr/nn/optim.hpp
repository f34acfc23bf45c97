#pragma once

#include "cdasr/nn/params.hpp"

#include <cmath>

namespace cdasr::nn {

template <typename Scalar>
Scalar clip_grad_norm(ParamSet<Scalar>& ps, Scalar max_norm) {
  Scalar sq = 0;
  for (const auto& p : ps.all()) sq += p->grad.squaredNorm();
  Scalar norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    Scalar scale = max_norm / (norm + Scalar(1e-6));
    for (const auto& p : ps.all()) p->grad *= scale;
  }
  return norm;
}

template <typename Scalar>
class Adam {
 public:
  explicit Adam(const ParamSet<Scalar>& ps, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                Scalar eps = Scalar(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : ps.all()) {
      m_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step(ParamSet<Scalar>& ps, Scalar lr) {
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
    const auto& params = ps.all();
    for (size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      m_[k] = beta1_ * m_[k] + (Scalar(1) - beta1_) * p.grad;
      v_[k] = beta2_ * v_[k] + (Scalar(1) - beta2_) * p.grad.cwiseAbs2();
      p.value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
  }

 private:
  Scalar beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat<Scalar>> m_;
  std::vector<Mat<Scalar>> v_;
};

}  // namespace cdasr::nn
