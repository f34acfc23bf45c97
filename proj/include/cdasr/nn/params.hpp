#pragma once

#include "cdasr/common.hpp"
#include "cdasr/io.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace cdasr::nn {

template <typename Scalar>
struct Param {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
};

/// Owns the trainable tensors of a model. Addresses are stable, so layers keep raw pointers.
template <typename Scalar>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  Param<Scalar>* add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    for (const auto& p : params_)
      if (p->name == name) throw Error("duplicate parameter " + name);
    auto p = std::make_unique<Param<Scalar>>();
    p->name = std::move(name);
    p->value = Mat<Scalar>::Zero(rows, cols);
    p->grad = Mat<Scalar>::Zero(rows, cols);
    params_.push_back(std::move(p));
    return params_.back().get();
  }

  const std::vector<std::unique_ptr<Param<Scalar>>>& all() const { return params_; }

  Param<Scalar>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  Eigen::Index count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for matrices with fan_in = cols; biases stay zero.
  void init_uniform(uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      if (p->value.cols() == 1) continue;
      double k = 1.0 / std::sqrt(static_cast<double>(p->value.cols()));
      std::uniform_real_distribution<double> dist(-k, k);
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        for (Eigen::Index i = 0; i < p->value.rows(); ++i) p->value(i, j) = static_cast<Scalar>(dist(rng));
    }
  }

  void export_to(Checkpoint& ck) const {
    for (const auto& p : params_) ck.tensors[p->name] = p->value.template cast<float>();
  }

  void import_from(const Checkpoint& ck) {
    for (auto& p : params_) {
      auto it = ck.tensors.find(p->name);
      if (it == ck.tensors.end()) throw Error("checkpoint missing tensor " + p->name);
      if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
        throw Error("checkpoint tensor shape mismatch for " + p->name);
      p->value = it->second.template cast<Scalar>();
    }
  }

  void copy_values_from(const ParamSet& other) {
    if (other.params_.size() != params_.size()) throw Error("parameter set mismatch");
    for (size_t i = 0; i < params_.size(); ++i) params_[i]->value = other.params_[i]->value;
  }

 private:
  std::vector<std::unique_ptr<Param<Scalar>>> params_;
};

}  // namespace cdasr::nn
