#pragma once

#include "cdasr/nn/layers.hpp"

namespace cdasr::nn {

/// Packs utterance features (frames x dims each) into a time-major batch, dims x (steps * batch).
template <typename Scalar>
Mat<Scalar> pack_features(const std::vector<const FeatureMatrix*>& feats, Eigen::Index* steps,
                          std::vector<int>* lengths) {
  const auto B = static_cast<Eigen::Index>(feats.size());
  if (B == 0) throw Error("empty feature batch");
  const auto F = feats[0]->cols();
  Eigen::Index T = 0;
  lengths->clear();
  for (const auto* f : feats) {
    if (f->cols() != F) throw Error("feature dimension differs within a batch");
    if (f->rows() == 0) throw Error("utterance with zero frames");
    lengths->push_back(static_cast<int>(f->rows()));
    T = std::max(T, f->rows());
  }
  Mat<Scalar> x = Mat<Scalar>::Zero(F, T * B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index t = 0; t < feats[b]->rows(); ++t)
      x.col(tm_col(t, b, B)) = feats[b]->row(t).transpose().template cast<Scalar>();
  *steps = T;
  return x;
}

/// Strided convolutions (each halves the frame rate) followed by stacked bidirectional LSTMs.
template <typename Scalar>
class FrameEncoder {
 public:
  struct Cache {
    std::vector<typename StridedConv<Scalar>::Cache> convs;
    std::vector<typename BiLstm<Scalar>::Cache> rnns;
    Eigen::Index out_steps = 0;
    std::vector<int> out_lengths;
  };

  FrameEncoder() = default;
  FrameEncoder(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index in_dim, Eigen::Index conv_dim,
               Eigen::Index hidden, int conv_layers, int rnn_layers) {
    Eigen::Index d = in_dim;
    for (int k = 0; k < conv_layers; ++k) {
      convs_.emplace_back(ps, name + ".conv" + std::to_string(k), d, conv_dim);
      d = conv_dim;
    }
    for (int k = 0; k < rnn_layers; ++k) {
      rnns_.emplace_back(ps, name + ".rnn" + std::to_string(k), d, hidden);
      d = 2 * hidden;
    }
    out_dim_ = d;
  }

  void init_forget_bias() {
    for (auto& r : rnns_) r.init_forget_bias();
  }

  Eigen::Index out_dim() const { return out_dim_; }
  int subsample() const { return 1 << convs_.size(); }

  int out_length(int len) const {
    for (size_t k = 0; k < convs_.size(); ++k) len = StridedConv<Scalar>::out_length(len);
    return len;
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, Eigen::Index steps, const std::vector<int>& lengths, Cache& c) const {
    c.convs.clear();
    c.rnns.assign(rnns_.size(), {});
    Mat<Scalar> h = x;
    Eigen::Index t = steps;
    std::vector<int> lens = lengths;
    for (const auto& conv : convs_) {
      c.convs.push_back(conv.forward(h, t, lens));
      h = c.convs.back().output;
      t = c.convs.back().out_steps;
      lens = c.convs.back().out_lengths;
    }
    for (size_t k = 0; k < rnns_.size(); ++k) h = rnns_[k].forward(h, t, lens, c.rnns[k]);
    c.out_steps = t;
    c.out_lengths = lens;
    return h;
  }

  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dout) {
    Mat<Scalar> d = dout;
    for (size_t k = rnns_.size(); k-- > 0;) d = rnns_[k].backward(c.rnns[k], d);
    for (size_t k = convs_.size(); k-- > 0;) d = convs_[k].backward(c.convs[k], d);
    return d;
  }

 private:
  std::vector<StridedConv<Scalar>> convs_;
  std::vector<BiLstm<Scalar>> rnns_;
  Eigen::Index out_dim_ = 0;
};

}  // namespace cdasr::nn
