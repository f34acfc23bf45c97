#pragma once

#include "cdasr/nn/layers.hpp"

namespace cdasr::nn {

/// Additive (Bahdanau) attention: score_t = v^T tanh(W_k k_t + W_q q + b).
///
/// Keys are the encoder states of one utterance laid out as columns (enc_dim x length).
/// The key projection is computed once per utterance; the query projection once per step
/// for the whole batch.
template <typename Scalar>
class AdditiveAttention {
 public:
  struct StepCache {
    Mat<Scalar> hidden;  // tanh activations, attn_dim x length
    Vec<Scalar> weights;
  };

  AdditiveAttention() = default;
  AdditiveAttention(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index enc_dim, Eigen::Index query_dim,
                    Eigen::Index attn_dim)
      : key_proj_(ps.add(name + ".key_proj", attn_dim, enc_dim)),
        query_(ps, name + ".query", query_dim, attn_dim),
        score_(ps.add(name + ".score", attn_dim, 1)) {}

  Eigen::Index attn_dim() const { return key_proj_->value.rows(); }

  Mat<Scalar> project_keys(const Mat<Scalar>& enc) const { return key_proj_->value * enc; }
  Mat<Scalar> project_queries(const Mat<Scalar>& queries) const { return query_.forward(queries); }

  /// Context vector for one sequence and one query projection.
  Vec<Scalar> attend(const Eigen::Ref<const Mat<Scalar>>& enc, const Eigen::Ref<const Mat<Scalar>>& keys,
                     const Eigen::Ref<const Vec<Scalar>>& query_proj, StepCache& cache) const {
    cache.hidden = (keys.colwise() + query_proj).array().tanh();
    Vec<Scalar> scores = cache.hidden.transpose() * score_->value.col(0);
    cache.weights = softmax(scores);
    return enc * cache.weights;
  }

  /// Backprop one attend() call. Accumulates into denc/dkeys (same shapes as enc/keys) and returns
  /// dL/d(query projection).
  Vec<Scalar> attend_backward(const Eigen::Ref<const Mat<Scalar>>& enc, const StepCache& cache,
                              const Eigen::Ref<const Vec<Scalar>>& dcontext, Eigen::Ref<Mat<Scalar>> denc,
                              Eigen::Ref<Mat<Scalar>> dkeys) {
    const Vec<Scalar>& a = cache.weights;
    denc.noalias() += dcontext * a.transpose();
    Vec<Scalar> dweights = enc.transpose() * dcontext;
    Vec<Scalar> dscores = a.cwiseProduct((dweights.array() - a.dot(dweights)).matrix());
    score_->grad.col(0).noalias() += cache.hidden * dscores;
    Mat<Scalar> dpre = (score_->value.col(0) * dscores.transpose()).array() * (Scalar(1) - cache.hidden.array().square());
    dkeys += dpre;
    return dpre.rowwise().sum();
  }

  /// Closes out the key projection once every step has been backpropagated. Returns dL/denc contribution.
  Mat<Scalar> keys_backward(const Mat<Scalar>& enc, const Mat<Scalar>& dkeys) {
    key_proj_->grad.noalias() += dkeys * enc.transpose();
    return key_proj_->value.transpose() * dkeys;
  }

  Mat<Scalar> queries_backward(const Mat<Scalar>& queries, const Mat<Scalar>& dquery_proj) {
    return query_.backward(queries, dquery_proj);
  }

 private:
  Param<Scalar>* key_proj_ = nullptr;
  Linear<Scalar> query_;
  Param<Scalar>* score_ = nullptr;
};

}  // namespace cdasr::nn
