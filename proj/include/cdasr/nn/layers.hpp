#pragma once

#include "cdasr/nn/functional.hpp"
#include "cdasr/nn/params.hpp"

#include <string>
#include <vector>

namespace cdasr::nn {

// Batched sequences are stored time-major: column t*B + b holds step t of sequence b.
// Positions at or beyond a sequence's length are kept at zero in every layer output.

inline Eigen::Index tm_col(Eigen::Index t, Eigen::Index b, Eigen::Index batch) { return t * batch + b; }

/// Zeroes columns past each sequence's length.
template <typename Scalar>
void mask_time_major(Mat<Scalar>& x, Eigen::Index steps, const std::vector<int>& lengths) {
  const auto batch = static_cast<Eigen::Index>(lengths.size());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index t = lengths[b]; t < steps; ++t) x.col(tm_col(t, b, batch)).setZero();
}

/// Reverses each sequence within its own length; padding stays at the end.
template <typename Scalar>
Mat<Scalar> reverse_time_major(const Mat<Scalar>& x, Eigen::Index steps, const std::vector<int>& lengths) {
  const auto batch = static_cast<Eigen::Index>(lengths.size());
  Mat<Scalar> out = Mat<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index t = 0; t < lengths[b]; ++t)
      out.col(tm_col(t, b, batch)) = x.col(tm_col(lengths[b] - 1 - t, b, batch));
  (void)steps;
  return out;
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight_(ps.add(name + ".weight", out, in)), bias_(ps.add(name + ".bias", out, 1)) {}

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = weight_->value * x;
    y.colwise() += bias_->value.col(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    accumulate(x, dy);
    return weight_->value.transpose() * dy;
  }

  void accumulate(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    weight_->grad.noalias() += dy * x.transpose();
    bias_->grad += dy.rowwise().sum();
  }

  Param<Scalar>& weight() const { return *weight_; }
  Param<Scalar>& bias() const { return *bias_; }
  Eigen::Index in_dim() const { return weight_->value.cols(); }
  Eigen::Index out_dim() const { return weight_->value.rows(); }

 private:
  Param<Scalar>* weight_ = nullptr;
  Param<Scalar>* bias_ = nullptr;
};

/// Lookup table; column k is the embedding of id k.
template <typename Scalar>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index vocab, Eigen::Index dim)
      : table_(ps.add(name + ".table", dim, vocab)) {}

  Mat<Scalar> forward(const std::vector<int>& ids) const {
    Mat<Scalar> out(table_->value.rows(), static_cast<Eigen::Index>(ids.size()));
    for (size_t k = 0; k < ids.size(); ++k) out.col(k) = table_->value.col(ids[k]);
    return out;
  }

  void backward(const std::vector<int>& ids, const Mat<Scalar>& dy) {
    for (size_t k = 0; k < ids.size(); ++k) table_->grad.col(ids[k]) += dy.col(k);
  }

  Eigen::Index dim() const { return table_->value.rows(); }
  Param<Scalar>& table() const { return *table_; }

 private:
  Param<Scalar>* table_ = nullptr;
};

/// Kernel-3, stride-2, zero-padded 1-D convolution over time with ReLU. Halves the frame rate.
template <typename Scalar>
class StridedConv {
 public:
  struct Cache {
    Mat<Scalar> columns;
    Mat<Scalar> output;
    Eigen::Index in_steps = 0;
    Eigen::Index out_steps = 0;
    std::vector<int> in_lengths;
    std::vector<int> out_lengths;
  };

  StridedConv() = default;
  StridedConv(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index in, Eigen::Index out)
      : in_dim_(in), proj_(ps, name, 3 * in, out) {}

  static int out_length(int len) { return (len + 1) / 2; }

  Cache forward(const Mat<Scalar>& x, Eigen::Index steps, const std::vector<int>& lengths) const {
    const auto batch = static_cast<Eigen::Index>(lengths.size());
    Cache c;
    c.in_steps = steps;
    c.out_steps = (steps + 1) / 2;
    c.in_lengths = lengths;
    for (int len : lengths) c.out_lengths.push_back(out_length(len));
    c.columns = Mat<Scalar>::Zero(3 * in_dim_, c.out_steps * batch);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index t = 0; t < c.out_lengths[b]; ++t)
        for (Eigen::Index k = 0; k < 3; ++k) {
          Eigen::Index src = 2 * t - 1 + k;
          if (src < 0 || src >= lengths[b]) continue;
          c.columns.block(k * in_dim_, tm_col(t, b, batch), in_dim_, 1) = x.col(tm_col(src, b, batch));
        }
    c.output = proj_.forward(c.columns).cwiseMax(Scalar(0));
    mask_time_major(c.output, c.out_steps, c.out_lengths);
    return c;
  }

  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dy) {
    const auto batch = static_cast<Eigen::Index>(c.in_lengths.size());
    Mat<Scalar> dpre = (c.output.array() > Scalar(0)).select(dy, Scalar(0));
    Mat<Scalar> dcols = proj_.backward(c.columns, dpre);
    Mat<Scalar> dx = Mat<Scalar>::Zero(in_dim_, c.in_steps * batch);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index t = 0; t < c.out_lengths[b]; ++t)
        for (Eigen::Index k = 0; k < 3; ++k) {
          Eigen::Index src = 2 * t - 1 + k;
          if (src < 0 || src >= c.in_lengths[b]) continue;
          dx.col(tm_col(src, b, batch)) += dcols.block(k * in_dim_, tm_col(t, b, batch), in_dim_, 1);
        }
    return dx;
  }

  Eigen::Index out_dim() const { return proj_.out_dim(); }

 private:
  Eigen::Index in_dim_ = 0;
  Linear<Scalar> proj_;
};

/// Single-direction LSTM, gate order [input, forget, cell, output].
template <typename Scalar>
class Lstm {
 public:
  struct Cache {
    Mat<Scalar> input;
    Mat<Scalar> gates;  // activated gates, 4H x (T*B)
    Mat<Scalar> cells;
    Mat<Scalar> hidden;
    Eigen::Index steps = 0;
    Eigen::Index batch = 0;
  };

  Lstm() = default;
  Lstm(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden)
      : hidden_(hidden),
        wx_(ps.add(name + ".wx", 4 * hidden, in)),
        wh_(ps.add(name + ".wh", 4 * hidden, hidden)),
        bias_(ps.add(name + ".bias", 4 * hidden, 1)) {}

  void init_forget_bias(Scalar value = Scalar(1)) { bias_->value.block(hidden_, 0, hidden_, 1).setConstant(value); }

  Eigen::Index hidden_dim() const { return hidden_; }
  Eigen::Index in_dim() const { return wx_->value.cols(); }

  /// pre-activations -> activated gates, new cell, new hidden.
  void activate(const Mat<Scalar>& pre, const Mat<Scalar>& c_prev, Mat<Scalar>& gates, Mat<Scalar>& c,
                Mat<Scalar>& h) const {
    const auto H = hidden_;
    gates.resize(4 * H, pre.cols());
    gates.topRows(H) = sigmoid(pre.topRows(H).array());
    gates.middleRows(H, H) = sigmoid(pre.middleRows(H, H).array());
    gates.middleRows(2 * H, H) = pre.middleRows(2 * H, H).array().tanh();
    gates.bottomRows(H) = sigmoid(pre.bottomRows(H).array());
    c = gates.middleRows(H, H).cwiseProduct(c_prev) + gates.topRows(H).cwiseProduct(gates.middleRows(2 * H, H));
    h = gates.bottomRows(H).cwiseProduct(Mat<Scalar>(c.array().tanh()));
  }

  /// Backprop through one activation given dL/dh and dL/dc flowing into this step.
  /// Returns dL/d(pre-activation); writes dL/dc_prev.
  Mat<Scalar> activate_backward(const Mat<Scalar>& gates, const Mat<Scalar>& c, const Mat<Scalar>& c_prev,
                                const Mat<Scalar>& dh, const Mat<Scalar>& dc_in, Mat<Scalar>& dc_prev) const {
    const auto H = hidden_;
    auto i = gates.topRows(H).array();
    auto f = gates.middleRows(H, H).array();
    auto g = gates.middleRows(2 * H, H).array();
    auto o = gates.bottomRows(H).array();
    Mat<Scalar> tc = c.array().tanh();
    Mat<Scalar> dc = dc_in.array() + dh.array() * o * (Scalar(1) - tc.array().square());
    Mat<Scalar> dpre(4 * H, gates.cols());
    dpre.topRows(H) = dc.array() * g * i * (Scalar(1) - i);
    dpre.middleRows(H, H) = dc.array() * c_prev.array() * f * (Scalar(1) - f);
    dpre.middleRows(2 * H, H) = dc.array() * i * (Scalar(1) - g.square());
    dpre.bottomRows(H) = dh.array() * tc.array() * o * (Scalar(1) - o);
    dc_prev = dc.array() * f;
    return dpre;
  }

  Mat<Scalar> preactivation(const Mat<Scalar>& x, const Mat<Scalar>& h_prev) const {
    Mat<Scalar> pre = wx_->value * x;
    pre.noalias() += wh_->value * h_prev;
    pre.colwise() += bias_->value.col(0);
    return pre;
  }

  /// Gradients of a single step's pre-activation with respect to the weights; returns {dx, dh_prev}.
  std::pair<Mat<Scalar>, Mat<Scalar>> preactivation_backward(const Mat<Scalar>& x, const Mat<Scalar>& h_prev,
                                                             const Mat<Scalar>& dpre) {
    wx_->grad.noalias() += dpre * x.transpose();
    wh_->grad.noalias() += dpre * h_prev.transpose();
    bias_->grad += dpre.rowwise().sum();
    return {wx_->value.transpose() * dpre, wh_->value.transpose() * dpre};
  }

  Cache forward(const Mat<Scalar>& x, Eigen::Index steps, Eigen::Index batch) const {
    const auto H = hidden_;
    Cache c;
    c.input = x;
    c.steps = steps;
    c.batch = batch;
    c.gates.resize(4 * H, steps * batch);
    c.cells.resize(H, steps * batch);
    c.hidden.resize(H, steps * batch);
    Mat<Scalar> pre_x = wx_->value * x;
    pre_x.colwise() += bias_->value.col(0);
    Mat<Scalar> h = Mat<Scalar>::Zero(H, batch), cell = Mat<Scalar>::Zero(H, batch);
    Mat<Scalar> gates, cell_new, h_new;
    for (Eigen::Index t = 0; t < steps; ++t) {
      Mat<Scalar> pre = pre_x.middleCols(t * batch, batch);
      pre.noalias() += wh_->value * h;
      activate(pre, cell, gates, cell_new, h_new);
      c.gates.middleCols(t * batch, batch) = gates;
      c.cells.middleCols(t * batch, batch) = cell_new;
      c.hidden.middleCols(t * batch, batch) = h_new;
      cell = cell_new;
      h = h_new;
    }
    return c;
  }

  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dhidden) {
    const auto H = hidden_;
    const auto B = c.batch;
    Mat<Scalar> dpre_all(4 * H, c.steps * B);
    Mat<Scalar> dh_next = Mat<Scalar>::Zero(H, B), dc_next = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> zeros = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> dc_prev;
    for (Eigen::Index t = c.steps - 1; t >= 0; --t) {
      Mat<Scalar> dh = dhidden.middleCols(t * B, B) + dh_next;
      Mat<Scalar> c_prev = t > 0 ? Mat<Scalar>(c.cells.middleCols((t - 1) * B, B)) : zeros;
      Mat<Scalar> dpre = activate_backward(c.gates.middleCols(t * B, B), c.cells.middleCols(t * B, B), c_prev, dh,
                                           dc_next, dc_prev);
      dc_next = dc_prev;
      dh_next.noalias() = wh_->value.transpose() * dpre;
      dpre_all.middleCols(t * B, B) = dpre;
    }
    wx_->grad.noalias() += dpre_all * c.input.transpose();
    if (c.steps > 1)
      wh_->grad.noalias() +=
          dpre_all.rightCols((c.steps - 1) * B) * c.hidden.leftCols((c.steps - 1) * B).transpose();
    bias_->grad += dpre_all.rowwise().sum();
    return wx_->value.transpose() * dpre_all;
  }

 private:
  Eigen::Index hidden_ = 0;
  Param<Scalar>* wx_ = nullptr;
  Param<Scalar>* wh_ = nullptr;
  Param<Scalar>* bias_ = nullptr;
};

/// Bidirectional LSTM; output rows are [forward; backward].
template <typename Scalar>
class BiLstm {
 public:
  struct Cache {
    typename Lstm<Scalar>::Cache fwd;
    typename Lstm<Scalar>::Cache bwd;
    std::vector<int> lengths;
    Eigen::Index steps = 0;
  };

  BiLstm() = default;
  BiLstm(ParamSet<Scalar>& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden)
      : fwd_(ps, name + ".fwd", in, hidden), bwd_(ps, name + ".bwd", in, hidden) {}

  void init_forget_bias() {
    fwd_.init_forget_bias();
    bwd_.init_forget_bias();
  }

  Eigen::Index out_dim() const { return 2 * fwd_.hidden_dim(); }

  Mat<Scalar> forward(const Mat<Scalar>& x, Eigen::Index steps, const std::vector<int>& lengths, Cache& c) const {
    const auto batch = static_cast<Eigen::Index>(lengths.size());
    const auto H = fwd_.hidden_dim();
    c.lengths = lengths;
    c.steps = steps;
    c.fwd = fwd_.forward(x, steps, batch);
    c.bwd = bwd_.forward(reverse_time_major(x, steps, lengths), steps, batch);
    Mat<Scalar> out(2 * H, steps * batch);
    out.topRows(H) = c.fwd.hidden;
    out.bottomRows(H) = reverse_time_major(c.bwd.hidden, steps, lengths);
    mask_time_major(out, steps, lengths);
    return out;
  }

  Mat<Scalar> backward(const Cache& c, const Mat<Scalar>& dout_in) {
    const auto H = fwd_.hidden_dim();
    Mat<Scalar> dout = dout_in;
    mask_time_major(dout, c.steps, c.lengths);
    Mat<Scalar> dx = fwd_.backward(c.fwd, dout.topRows(H));
    Mat<Scalar> dbwd = reverse_time_major(Mat<Scalar>(dout.bottomRows(H)), c.steps, c.lengths);
    dx += reverse_time_major(bwd_.backward(c.bwd, dbwd), c.steps, c.lengths);
    return dx;
  }

 private:
  Lstm<Scalar> fwd_;
  Lstm<Scalar> bwd_;
};

}  // namespace cdasr::nn
