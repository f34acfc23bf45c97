#pragma once

#include "cdasr/corpus/corpus.hpp"
#include "cdasr/modular/ctc.hpp"
#include "cdasr/nn/encoder.hpp"

#include <memory>

namespace cdasr::modular {

struct ModularAMConfig {
  int subsample = 4;  // power of two; one strided convolution per halving
  int conv_dim = 96;
  int hidden = 96;
  int rnn_layers = 1;
  int epochs = 15;
  int batch_size = 16;
  double peak_rate = 2e-3;
  double floor_rate = 1e-4;
  double clip = 5.0;
  uint64_t seed = 1;

  int conv_layers() const;
  static ModularAMConfig from_json(const json& j);
  json to_json() const;
};

/// Frame encoder followed by a projection to alphabet logits.
template <typename Scalar>
class ModularAMNet {
 public:
  ModularAMNet(int feature_dim, int alphabet_size, const ModularAMConfig& cfg)
      : encoder_(params_, "am.encoder", feature_dim, cfg.conv_dim, cfg.hidden, cfg.conv_layers(), cfg.rnn_layers),
        out_(params_, "am.out", encoder_.out_dim(), alphabet_size) {
    params_.init_uniform(cfg.seed);
    encoder_.init_forget_bias();
  }

  nn::ParamSet<Scalar>& params() { return params_; }
  const nn::ParamSet<Scalar>& params() const { return params_; }
  int out_length(int frames) const { return encoder_.out_length(frames); }

  /// Per-utterance log-posteriors, reduced frames x alphabet.
  std::vector<MatrixXd> log_posteriors(const std::vector<const FeatureMatrix*>& feats) const {
    Pass p = run(feats);
    return split(p);
  }

  /// Mean CTC loss over the batch. Labels must be reachable. Accumulates gradients when asked.
  double ctc_batch(const std::vector<const FeatureMatrix*>& feats, const std::vector<std::vector<int>>& labels,
                   bool with_grad) {
    Pass p = run(feats);
    const auto B = static_cast<Eigen::Index>(feats.size());
    auto per_utt = split(p);
    Mat<Scalar> dlogits = Mat<Scalar>::Zero(p.logp.rows(), p.logp.cols());
    double total = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      MatrixXd g;
      double nll = ctc_loss_with_grad(per_utt[b], labels[b], with_grad ? &g : nullptr);
      if (!std::isfinite(nll)) throw Error("ctc_batch: label sequence cannot fit the reduced frames");
      total += nll;
      if (with_grad)
        for (Eigen::Index t = 0; t < g.rows(); ++t)
          dlogits.col(nn::tm_col(t, b, B)) = (g.row(t).transpose() / double(B)).template cast<Scalar>();
    }
    if (with_grad) {
      Mat<Scalar> denc = out_.backward(p.enc, dlogits);
      encoder_.backward(p.cache, denc);
    }
    return total / double(B);
  }

 private:
  struct Pass {
    typename nn::FrameEncoder<Scalar>::Cache cache;
    Mat<Scalar> enc;
    Mat<Scalar> logp;
  };

  Pass run(const std::vector<const FeatureMatrix*>& feats) const {
    Pass p;
    Eigen::Index steps = 0;
    std::vector<int> lengths;
    Mat<Scalar> x = nn::pack_features<Scalar>(feats, &steps, &lengths);
    p.enc = encoder_.forward(x, steps, lengths, p.cache);
    p.logp = nn::log_softmax_cols(out_.forward(p.enc));
    return p;
  }

  std::vector<MatrixXd> split(const Pass& p) const {
    const auto B = static_cast<Eigen::Index>(p.cache.out_lengths.size());
    std::vector<MatrixXd> out(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      out[b].resize(p.cache.out_lengths[b], p.logp.rows());
      for (Eigen::Index t = 0; t < out[b].rows(); ++t)
        out[b].row(t) = p.logp.col(nn::tm_col(t, b, B)).transpose().template cast<double>();
    }
    return out;
  }

  nn::ParamSet<Scalar> params_;
  nn::FrameEncoder<Scalar> encoder_;
  nn::Linear<Scalar> out_;
};

class ModularAM {
 public:
  ModularAM(Alphabet alphabet, int feature_dim, ModularAMConfig cfg);

  const Alphabet& alphabet() const { return alphabet_; }
  const ModularAMConfig& config() const { return cfg_; }
  int feature_dim() const { return feature_dim_; }
  int subsample() const { return cfg_.subsample; }
  ModularAMNet<float>& net() { return *net_; }
  const ModularAMNet<float>& net() const { return *net_; }

  /// Log-posteriors, ceil(frames / subsample) x alphabet size.
  MatrixXd log_posteriors(const FeatureMatrix& features) const;
  std::vector<MatrixXd> log_posteriors(const std::vector<const FeatureMatrix*>& batch) const;

  Checkpoint to_checkpoint() const;
  static ModularAM from_checkpoint(const Checkpoint& ck);
  void save(const fs::path& path) const { to_checkpoint().save(path); }
  static ModularAM load(const fs::path& path) { return from_checkpoint(Checkpoint::load(path)); }

 private:
  Alphabet alphabet_;
  int feature_dim_;
  ModularAMConfig cfg_;
  std::unique_ptr<ModularAMNet<float>> net_;
};

struct ModularTrainReport {
  int skipped = 0;
  double initial_heldout_loss = 0;
  double final_heldout_loss = 0;
  std::vector<double> epoch_losses;
};

/// Minimizes the CTC loss over transcribed utterances. Utterances whose labels cannot fit the
/// reduced frame count are skipped with a warning on stderr.
ModularAM train_modular_am(const std::vector<const corpus::Utterance*>& train, const Alphabet& alphabet,
                           const ModularAMConfig& cfg, const std::vector<const corpus::Utterance*>& heldout = {},
                           ModularTrainReport* report = nullptr);

/// Mean per-utterance CTC loss; unreachable utterances are ignored.
double modular_heldout_loss(const ModularAM& am, const std::vector<const corpus::Utterance*>& utts);

/// Greedy frame-collapse transcription.
WordSeq greedy_transcribe(const ModularAM& am, const FeatureMatrix& features);

}  // namespace cdasr::modular
