#pragma once

#include "cdasr/nn/layers.hpp"
#include "cdasr/s2s/schedule.hpp"
#include "cdasr/text/subword.hpp"

#include <memory>

namespace cdasr::text {

struct NeuralLMConfig {
  int layers = 2;
  int dim = 64;
  int embed_dim = 64;
  int batch_size = 32;
  int max_steps = 1500;
  double peak_rate = 3e-3;
  double floor_rate = 1e-4;
  double clip = 5.0;
  uint64_t seed = 1;
  bool zero_init_output = false;

  static NeuralLMConfig from_json(const json& j);
  json to_json() const;
};

/// Recurrent subword LM: embedding -> stacked LSTMs -> softmax over units.
/// Inputs are <s> u1..un, targets u1..un </s>.
template <typename Scalar>
class NeuralLMNet {
 public:
  struct State {
    std::vector<Vec<Scalar>> h;
    std::vector<Vec<Scalar>> c;
    Vec<Scalar> logprobs;  // distribution of the next unit
  };

  NeuralLMNet(int vocab_size, const NeuralLMConfig& cfg) : vocab_size_(vocab_size) {
    embed_ = nn::Embedding<Scalar>(params_, "lm.embed", vocab_size, cfg.embed_dim);
    Eigen::Index in = cfg.embed_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      layers_.emplace_back(params_, "lm.lstm" + std::to_string(l), in, cfg.dim);
      in = cfg.dim;
    }
    out_ = nn::Linear<Scalar>(params_, "lm.out", in, vocab_size);
    params_.init_uniform(cfg.seed);
    for (auto& l : layers_) l.init_forget_bias();
    if (cfg.zero_init_output) out_.weight().value.setZero();
  }

  nn::ParamSet<Scalar>& params() { return params_; }
  const nn::ParamSet<Scalar>& params() const { return params_; }
  int vocab_size() const { return vocab_size_; }

  /// Per-position target log-probabilities for each sequence (length n+1, last = </s>).
  std::vector<std::vector<Scalar>> score(const std::vector<std::vector<int>>& seqs, int bos, int eos,
                                         Scalar* mean_nll = nullptr) const {
    Pass pass = run(seqs, bos, eos);
    if (mean_nll) *mean_nll = pass.mean_nll;
    return std::move(pass.target_logprobs);
  }

  /// Accumulates gradients of the mean negative log-likelihood over all positions; returns that mean.
  Scalar train_batch(const std::vector<std::vector<int>>& seqs, int bos, int eos) {
    Pass pass = run(seqs, bos, eos);
    const auto B = static_cast<Eigen::Index>(seqs.size());
    Mat<Scalar> dlogits = pass.logp.array().exp();
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < pass.steps; ++t) {
        auto col = nn::tm_col(t, b, B);
        if (t >= pass.lengths[b]) {
          dlogits.col(col).setZero();
          continue;
        }
        dlogits(pass.targets[col], col) -= Scalar(1);
      }
    dlogits /= Scalar(pass.count);
    Mat<Scalar> dx = out_.backward(pass.top, dlogits);
    for (size_t l = layers_.size(); l-- > 0;) dx = layers_[l].backward(pass.caches[l], dx);
    embed_.backward(pass.inputs, dx);
    return pass.mean_nll;
  }

  State start(int bos) const {
    State s;
    for (const auto& l : layers_) {
      s.h.push_back(Vec<Scalar>::Zero(l.hidden_dim()));
      s.c.push_back(Vec<Scalar>::Zero(l.hidden_dim()));
    }
    return advance(s, bos);
  }

  State advance(const State& prev, int unit) const {
    if (unit < 0 || unit >= vocab_size_) throw Error("neural LM: unit id outside the model vocabulary");
    State s;
    Mat<Scalar> x = embed_.table().value.col(unit);
    for (size_t l = 0; l < layers_.size(); ++l) {
      Mat<Scalar> gates, c, h;
      Mat<Scalar> pre = layers_[l].preactivation(x, prev.h[l]);
      layers_[l].activate(pre, prev.c[l], gates, c, h);
      s.h.push_back(h.col(0));
      s.c.push_back(c.col(0));
      x = h;
    }
    s.logprobs = nn::log_softmax_cols(out_.forward(x)).col(0);
    return s;
  }

 private:
  struct Pass {
    Eigen::Index steps = 0;
    std::vector<int> lengths, inputs, targets;
    std::vector<typename nn::Lstm<Scalar>::Cache> caches;
    Mat<Scalar> top, logp;
    std::vector<std::vector<Scalar>> target_logprobs;
    Scalar mean_nll = 0;
    long count = 0;
  };

  Pass run(const std::vector<std::vector<int>>& seqs, int bos, int eos) const {
    Pass p;
    const auto B = static_cast<Eigen::Index>(seqs.size());
    for (const auto& s : seqs) {
      for (int u : s)
        if (u < 0 || u >= vocab_size_) throw Error("neural LM: unit id outside the model vocabulary");
      p.lengths.push_back(static_cast<int>(s.size()) + 1);
      p.steps = std::max<Eigen::Index>(p.steps, p.lengths.back());
    }
    const auto T = p.steps;
    p.inputs.assign(T * B, eos);
    p.targets.assign(T * B, eos);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < p.lengths[b]; ++t) {
        p.inputs[nn::tm_col(t, b, B)] = t == 0 ? bos : seqs[b][t - 1];
        p.targets[nn::tm_col(t, b, B)] = t + 1 < p.lengths[b] ? seqs[b][t] : eos;
      }
    p.caches.resize(layers_.size());
    Mat<Scalar> x = embed_.forward(p.inputs);
    for (size_t l = 0; l < layers_.size(); ++l) {
      p.caches[l] = layers_[l].forward(x, T, B);
      x = p.caches[l].hidden;
    }
    p.top = x;
    p.logp = nn::log_softmax_cols(out_.forward(x));
    p.target_logprobs.resize(B);
    Scalar total = 0;
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < p.lengths[b]; ++t) {
        Scalar lp = p.logp(p.targets[nn::tm_col(t, b, B)], nn::tm_col(t, b, B));
        p.target_logprobs[b].push_back(lp);
        total -= lp;
        ++p.count;
      }
    p.mean_nll = p.count ? total / Scalar(p.count) : Scalar(0);
    return p;
  }

  int vocab_size_;
  nn::ParamSet<Scalar> params_;
  nn::Embedding<Scalar> embed_;
  std::vector<nn::Lstm<Scalar>> layers_;
  nn::Linear<Scalar> out_;
};

class NeuralLM {
 public:
  NeuralLM(SubwordVocab vocab, NeuralLMConfig cfg);

  const SubwordVocab& vocab() const { return vocab_; }
  const NeuralLMConfig& config() const { return cfg_; }
  NeuralLMNet<float>& net() { return *net_; }
  const NeuralLMNet<float>& net() const { return *net_; }

  Checkpoint to_checkpoint() const;
  static NeuralLM from_checkpoint(const Checkpoint& ck);
  void save(const fs::path& path) const { to_checkpoint().save(path); }
  static NeuralLM load(const fs::path& path) { return from_checkpoint(Checkpoint::load(path)); }

 private:
  SubwordVocab vocab_;
  NeuralLMConfig cfg_;
  std::unique_ptr<NeuralLMNet<float>> net_;
};

struct NeuralLMTrainReport {
  double initial_heldout_ppl = 0;
  double final_heldout_ppl = 0;
  std::vector<double> step_losses;
};

NeuralLM train_neural_lm(const std::vector<std::vector<int>>& sequences, const SubwordVocab& vocab,
                         const NeuralLMConfig& cfg, const std::vector<std::vector<int>>& heldout = {},
                         NeuralLMTrainReport* report = nullptr);

/// log P(unit | <s> prefix).
double neural_lm_logprob(const NeuralLM& lm, const std::vector<int>& prefix, int unit);
/// Sum of step log-probabilities via one batched pass; includes </s> when asked.
double neural_lm_sequence_logprob(const NeuralLM& lm, const std::vector<int>& units, bool include_eos = true);
double neural_lm_perplexity(const NeuralLM& lm, const std::vector<std::vector<int>>& sequences);

}  // namespace cdasr::text
