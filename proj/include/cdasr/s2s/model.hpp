#pragma once

#include "cdasr/corpus/corpus.hpp"
#include "cdasr/nn/attention.hpp"
#include "cdasr/nn/encoder.hpp"
#include "cdasr/s2s/schedule.hpp"
#include "cdasr/s2s/spec_augment.hpp"
#include "cdasr/text/subword.hpp"

#include <memory>

namespace cdasr::s2s {

struct Seq2SeqConfig {
  int conv_dim = 64;
  int enc_hidden = 64;
  int enc_layers = 2;
  int embed_dim = 64;
  int dec_hidden = 64;
  int attn_dim = 64;
  int epochs = 40;
  int batch_size = 8;
  double peak_rate = 3e-3;
  double floor_rate = 1e-5;
  double clip = 5.0;
  double label_smoothing = 0.1;
  SpecAugmentPolicy spec_augment;
  double validation_fraction = 0.05;
  uint64_t seed = 1;

  static Seq2SeqConfig from_json(const json& j);
  json to_json() const;
};

/// Smoothed cross-entropy: each row of `distributions` (L x |units|) is a predicted distribution,
/// scored against (1-p) on the gold unit plus p/|units| everywhere; averaged over rows.
double label_smoothed_loss(const MatrixXd& distributions, const std::vector<int>& targets, double p);

/// Encoder (two stride-2 convolutions, bidirectional LSTMs), additive attention and one LSTM decoder layer
/// fed with [previous unit embedding; previous context]. Output logits come from [state; context].
template <typename Scalar>
class Seq2SeqNet {
 public:
  struct Encoded {
    Mat<Scalar> enc;   // enc_dim x reduced steps
    Mat<Scalar> keys;  // attn_dim x reduced steps
  };

  /// Decoder state of several hypotheses over one utterance, one column each.
  struct State {
    Mat<Scalar> h, c, ctx;
  };

  Seq2SeqNet(int feature_dim, int vocab_size, const Seq2SeqConfig& cfg)
      : vocab_size_(vocab_size),
        encoder_(params_, "s2s.encoder", feature_dim, cfg.conv_dim, cfg.enc_hidden, 2, cfg.enc_layers),
        embed_(params_, "s2s.embed", vocab_size, cfg.embed_dim),
        dec_(params_, "s2s.decoder", cfg.embed_dim + encoder_.out_dim(), cfg.dec_hidden),
        attn_(params_, "s2s.attention", encoder_.out_dim(), cfg.dec_hidden, cfg.attn_dim),
        out_(params_, "s2s.out", cfg.dec_hidden + encoder_.out_dim(), vocab_size) {
    params_.init_uniform(cfg.seed);
    encoder_.init_forget_bias();
    dec_.init_forget_bias();
  }

  nn::ParamSet<Scalar>& params() { return params_; }
  const nn::ParamSet<Scalar>& params() const { return params_; }
  int vocab_size() const { return vocab_size_; }
  int out_length(int frames) const { return encoder_.out_length(frames); }

  std::vector<Encoded> encode(const std::vector<const FeatureMatrix*>& feats) const {
    typename nn::FrameEncoder<Scalar>::Cache cache;
    Eigen::Index steps = 0;
    std::vector<int> lengths;
    Mat<Scalar> x = nn::pack_features<Scalar>(feats, &steps, &lengths);
    Mat<Scalar> enc = encoder_.forward(x, steps, lengths, cache);
    std::vector<Encoded> out;
    for (size_t b = 0; b < feats.size(); ++b) {
      Encoded e;
      e.enc = gather(enc, static_cast<Eigen::Index>(b), feats.size(), cache.out_lengths[b]);
      e.keys = attn_.project_keys(e.enc);
      out.push_back(std::move(e));
    }
    return out;
  }

  State initial_state(Eigen::Index count) const {
    return {Mat<Scalar>::Zero(dec_.hidden_dim(), count), Mat<Scalar>::Zero(dec_.hidden_dim(), count),
            Mat<Scalar>::Zero(encoder_.out_dim(), count)};
  }

  /// One decoder step for every column of `state`; returns next-unit log-probabilities (vocab x count).
  Mat<Scalar> step(const Encoded& e, const std::vector<int>& prev_units, State& state,
                   std::vector<Vec<Scalar>>* attention = nullptr) const {
    const auto K = static_cast<Eigen::Index>(prev_units.size());
    Mat<Scalar> x(embed_.dim() + encoder_.out_dim(), K);
    x.topRows(embed_.dim()) = embed_.forward(prev_units);
    x.bottomRows(encoder_.out_dim()) = state.ctx;
    Mat<Scalar> gates, c, h;
    dec_.activate(dec_.preactivation(x, state.h), state.c, gates, c, h);
    Mat<Scalar> q = attn_.project_queries(h);
    Mat<Scalar> ctx(encoder_.out_dim(), K);
    typename nn::AdditiveAttention<Scalar>::StepCache sc;
    if (attention) attention->clear();
    for (Eigen::Index k = 0; k < K; ++k) {
      ctx.col(k) = attn_.attend(e.enc, e.keys, q.col(k), sc);
      if (attention) attention->push_back(sc.weights);
    }
    state = {h, c, ctx};
    Mat<Scalar> top(h.rows() + ctx.rows(), K);
    top << h, ctx;
    return nn::log_softmax_cols(out_.forward(top));
  }

  /// Teacher-forced pass over a batch. Targets exclude <s> and </s>. Returns the mean smoothed
  /// cross-entropy per output position and accumulates gradients when asked. `target_logprobs`
  /// receives, per utterance, log P of every gold output including the final </s>.
  Scalar loss(const std::vector<const FeatureMatrix*>& feats, const std::vector<std::vector<int>>& targets,
              double smoothing, int bos, int eos, bool with_grad,
              std::vector<std::vector<Scalar>>* target_logprobs = nullptr) {
    const auto B = static_cast<Eigen::Index>(feats.size());
    if (targets.size() != feats.size()) throw Error("seq2seq loss: one target sequence per utterance required");
    const auto D = encoder_.out_dim();
    const auto E = embed_.dim();
    const auto H = dec_.hidden_dim();
    const auto V = static_cast<Eigen::Index>(vocab_size_);

    typename nn::FrameEncoder<Scalar>::Cache ecache;
    Eigen::Index steps = 0;
    std::vector<int> lengths;
    Mat<Scalar> xin = nn::pack_features<Scalar>(feats, &steps, &lengths);
    Mat<Scalar> enc_all = encoder_.forward(xin, steps, lengths, ecache);
    std::vector<Mat<Scalar>> enc(B), keys(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      enc[b] = gather(enc_all, b, B, ecache.out_lengths[b]);
      keys[b] = attn_.project_keys(enc[b]);
    }

    std::vector<int> out_len(B);
    Eigen::Index L = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      for (int u : targets[b])
        if (u < 0 || u >= vocab_size_) throw Error("seq2seq loss: target unit outside the vocabulary");
      out_len[b] = static_cast<int>(targets[b].size()) + 1;
      L = std::max<Eigen::Index>(L, out_len[b]);
    }
    std::vector<int> inputs(L * B, eos), gold(L * B, eos);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < out_len[b]; ++t) {
        inputs[nn::tm_col(t, b, B)] = t == 0 ? bos : targets[b][t - 1];
        gold[nn::tm_col(t, b, B)] = t + 1 < out_len[b] ? targets[b][t] : eos;
      }

    Mat<Scalar> emb = embed_.forward(inputs);
    Mat<Scalar> xs(E + D, L * B), gates_all(4 * H, L * B), cells(H, L * B), hidden(H, L * B), ctxs(D, L * B);
    std::vector<typename nn::AdditiveAttention<Scalar>::StepCache> acache(L * B);
    Mat<Scalar> h = Mat<Scalar>::Zero(H, B), c = Mat<Scalar>::Zero(H, B), ctx = Mat<Scalar>::Zero(D, B);
    for (Eigen::Index t = 0; t < L; ++t) {
      Mat<Scalar> x(E + D, B);
      x.topRows(E) = emb.middleCols(t * B, B);
      x.bottomRows(D) = ctx;
      Mat<Scalar> gates, c_new, h_new;
      dec_.activate(dec_.preactivation(x, h), c, gates, c_new, h_new);
      Mat<Scalar> q = attn_.project_queries(h_new);
      for (Eigen::Index b = 0; b < B; ++b) ctx.col(b) = attn_.attend(enc[b], keys[b], q.col(b), acache[t * B + b]);
      xs.middleCols(t * B, B) = x;
      gates_all.middleCols(t * B, B) = gates;
      cells.middleCols(t * B, B) = c_new;
      hidden.middleCols(t * B, B) = h_new;
      ctxs.middleCols(t * B, B) = ctx;
      h = h_new;
      c = c_new;
    }
    Mat<Scalar> top(H + D, L * B);
    top << hidden, ctxs;
    Mat<Scalar> logp = nn::log_softmax_cols(out_.forward(top));

    const Scalar p = static_cast<Scalar>(smoothing);
    Scalar total = 0;
    long count = 0;
    if (target_logprobs) target_logprobs->assign(B, {});
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < out_len[b]; ++t) {
        auto col = nn::tm_col(t, b, B);
        Scalar g = logp(gold[col], col);
        total -= (Scalar(1) - p) * g + p / Scalar(V) * logp.col(col).sum();
        if (target_logprobs) (*target_logprobs)[b].push_back(g);
        ++count;
      }
    const Scalar mean = total / Scalar(count);
    if (!with_grad) return mean;

    Mat<Scalar> dlogits = logp.array().exp();
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < L; ++t) {
        auto col = nn::tm_col(t, b, B);
        if (t >= out_len[b]) {
          dlogits.col(col).setZero();
          continue;
        }
        dlogits.col(col).array() -= p / Scalar(V);
        dlogits(gold[col], col) -= Scalar(1) - p;
      }
    dlogits /= Scalar(count);
    Mat<Scalar> dtop = out_.backward(top, dlogits);

    std::vector<Mat<Scalar>> denc(B), dkeys(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      denc[b] = Mat<Scalar>::Zero(D, enc[b].cols());
      dkeys[b] = Mat<Scalar>::Zero(keys[b].rows(), keys[b].cols());
    }
    Mat<Scalar> demb(E, L * B);
    Mat<Scalar> dh_next = Mat<Scalar>::Zero(H, B), dc_next = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> dctx_next = Mat<Scalar>::Zero(D, B), zeros = Mat<Scalar>::Zero(H, B);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
      Mat<Scalar> dctx = dtop.block(H, t * B, D, B) + dctx_next;
      Mat<Scalar> dq(attn_dim(), B);
      for (Eigen::Index b = 0; b < B; ++b)
        dq.col(b) = attn_.attend_backward(enc[b], acache[t * B + b], dctx.col(b), denc[b], dkeys[b]);
      Mat<Scalar> h_t = hidden.middleCols(t * B, B);
      Mat<Scalar> dh = dtop.block(0, t * B, H, B) + dh_next + attn_.queries_backward(h_t, dq);
      Mat<Scalar> c_prev = t > 0 ? Mat<Scalar>(cells.middleCols((t - 1) * B, B)) : zeros;
      Mat<Scalar> h_prev = t > 0 ? Mat<Scalar>(hidden.middleCols((t - 1) * B, B)) : zeros;
      Mat<Scalar> dc_prev;
      Mat<Scalar> dpre = dec_.activate_backward(gates_all.middleCols(t * B, B), cells.middleCols(t * B, B), c_prev,
                                                dh, dc_next, dc_prev);
      auto [dx, dh_prev] = dec_.preactivation_backward(xs.middleCols(t * B, B), h_prev, dpre);
      demb.middleCols(t * B, B) = dx.topRows(E);
      dctx_next = dx.bottomRows(D);
      dh_next = dh_prev;
      dc_next = dc_prev;
    }
    embed_.backward(inputs, demb);
    Mat<Scalar> denc_all = Mat<Scalar>::Zero(D, enc_all.cols());
    for (Eigen::Index b = 0; b < B; ++b) {
      denc[b] += attn_.keys_backward(enc[b], dkeys[b]);
      for (Eigen::Index t = 0; t < denc[b].cols(); ++t) denc_all.col(nn::tm_col(t, b, B)) = denc[b].col(t);
    }
    encoder_.backward(ecache, denc_all);
    return mean;
  }

 private:
  Eigen::Index attn_dim() const { return attn_.attn_dim(); }

  static Mat<Scalar> gather(const Mat<Scalar>& tm, Eigen::Index b, size_t batch, int length) {
    const auto B = static_cast<Eigen::Index>(batch);
    Mat<Scalar> out(tm.rows(), length);
    for (Eigen::Index t = 0; t < length; ++t) out.col(t) = tm.col(nn::tm_col(t, b, B));
    return out;
  }

  int vocab_size_;
  nn::ParamSet<Scalar> params_;
  nn::FrameEncoder<Scalar> encoder_;
  nn::Embedding<Scalar> embed_;
  nn::Lstm<Scalar> dec_;
  nn::AdditiveAttention<Scalar> attn_;
  nn::Linear<Scalar> out_;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel(text::SubwordVocab vocab, int feature_dim, Seq2SeqConfig cfg);

  const text::SubwordVocab& vocab() const { return vocab_; }
  int feature_dim() const { return feature_dim_; }
  const Seq2SeqConfig& config() const { return cfg_; }
  Seq2SeqNet<float>& net() { return *net_; }
  const Seq2SeqNet<float>& net() const { return *net_; }

  Checkpoint to_checkpoint() const;
  static Seq2SeqModel from_checkpoint(const Checkpoint& ck);
  void save(const fs::path& path) const { to_checkpoint().save(path); }
  static Seq2SeqModel load(const fs::path& path) { return from_checkpoint(Checkpoint::load(path)); }

 private:
  text::SubwordVocab vocab_;
  int feature_dim_;
  Seq2SeqConfig cfg_;
  std::unique_ptr<Seq2SeqNet<float>> net_;
};

struct Seq2SeqTrainReport {
  int skipped = 0;
  std::vector<double> epoch_losses;
  std::vector<double> validation_wers;
  int best_epoch = -1;
  double best_validation_wer = 0;
};

/// Deterministic held-out selection: `fraction` of the utterances (at least one when there are two or
/// more) chosen by `seed`. Returns {train, validation}.
std::pair<std::vector<const corpus::Utterance*>, std::vector<const corpus::Utterance*>> split_validation(
    const std::vector<const corpus::Utterance*>& utts, double fraction, uint64_t seed);

/// Trains from scratch. Each epoch ends with a greedy decode of `validation`; the parameters with the
/// lowest validation WER are kept (the final ones when `validation` is empty). Utterances with empty
/// transcripts are skipped.
Seq2SeqModel train_seq2seq(const std::vector<const corpus::Utterance*>& train,
                           const std::vector<const corpus::Utterance*>& validation, const text::SubwordVocab& vocab,
                           const Seq2SeqConfig& cfg, Seq2SeqTrainReport* report = nullptr);

}  // namespace cdasr::s2s
