#include "cdasr/s2s/model.hpp"

#include "cdasr/eval/wer.hpp"
#include "cdasr/nn/optim.hpp"
#include "cdasr/s2s/decoder.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace cdasr::s2s {

Seq2SeqConfig Seq2SeqConfig::from_json(const json& j) {
  Seq2SeqConfig c;
  c.conv_dim = j.value("conv_dim", c.conv_dim);
  c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.attn_dim = j.value("attn_dim", c.attn_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.peak_rate = j.value("peak_rate", c.peak_rate);
  c.floor_rate = j.value("floor_rate", c.floor_rate);
  c.clip = j.value("clip", c.clip);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  if (j.contains("spec_augment")) c.spec_augment = SpecAugmentPolicy::from_json(j.at("spec_augment"));
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

json Seq2SeqConfig::to_json() const {
  return {{"conv_dim", conv_dim},
          {"enc_hidden", enc_hidden},
          {"enc_layers", enc_layers},
          {"embed_dim", embed_dim},
          {"dec_hidden", dec_hidden},
          {"attn_dim", attn_dim},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"peak_rate", peak_rate},
          {"floor_rate", floor_rate},
          {"clip", clip},
          {"label_smoothing", label_smoothing},
          {"spec_augment", spec_augment.to_json()},
          {"validation_fraction", validation_fraction},
          {"seed", seed}};
}

double label_smoothed_loss(const MatrixXd& distributions, const std::vector<int>& targets, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("label_smoothed_loss: smoothing must lie in [0, 1)");
  if (static_cast<Eigen::Index>(targets.size()) != distributions.rows())
    throw Error("label_smoothed_loss: one target per distribution row required");
  if (distributions.rows() == 0) throw Error("label_smoothed_loss: no steps");
  const auto V = distributions.cols();
  double total = 0;
  for (Eigen::Index r = 0; r < distributions.rows(); ++r) {
    if (std::abs(distributions.row(r).sum() - 1.0) > 1e-4)
      throw Error("label_smoothed_loss: row " + std::to_string(r) + " is not a normalized distribution");
    if (targets[r] < 0 || targets[r] >= V) throw Error("label_smoothed_loss: target outside the unit set");
    for (Eigen::Index k = 0; k < V; ++k) {
      double q = p / double(V) + (k == targets[r] ? 1.0 - p : 0.0);
      if (q > 0) total -= q * std::log(distributions(r, k));
    }
  }
  return total / double(distributions.rows());
}

Seq2SeqModel::Seq2SeqModel(text::SubwordVocab vocab, int feature_dim, Seq2SeqConfig cfg)
    : vocab_(std::move(vocab)),
      feature_dim_(feature_dim),
      cfg_(cfg),
      net_(std::make_unique<Seq2SeqNet<float>>(feature_dim, vocab_.size(), cfg_)) {}

Checkpoint Seq2SeqModel::to_checkpoint() const {
  Checkpoint ck;
  ck.config = {{"kind", "seq2seq"}, {"s2s", cfg_.to_json()}, {"vocab", vocab_.to_json()}, {"feature_dim", feature_dim_}};
  net_->params().export_to(ck);
  return ck;
}

Seq2SeqModel Seq2SeqModel::from_checkpoint(const Checkpoint& ck) {
  if (!ck.config.is_object() || ck.config.value("kind", "") != "seq2seq") throw Error("checkpoint is not a seq2seq model");
  Seq2SeqModel m(text::SubwordVocab::from_json(ck.config.at("vocab")), ck.config.at("feature_dim").get<int>(),
                 Seq2SeqConfig::from_json(ck.config.at("s2s")));
  m.net_->params().import_from(ck);
  return m;
}

std::pair<std::vector<const corpus::Utterance*>, std::vector<const corpus::Utterance*>> split_validation(
    const std::vector<const corpus::Utterance*>& utts, double fraction, uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("validation fraction must lie in [0, 1)");
  std::vector<size_t> order(utts.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
  size_t n_val = static_cast<size_t>(std::ceil(fraction * double(utts.size())));
  if (fraction > 0 && utts.size() >= 2) n_val = std::max<size_t>(n_val, 1);
  n_val = std::min(n_val, utts.size() > 0 ? utts.size() - 1 : 0);
  std::vector<bool> is_val(utts.size(), false);
  for (size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
  std::vector<const corpus::Utterance*> train, val;
  for (size_t k = 0; k < utts.size(); ++k) (is_val[k] ? val : train).push_back(utts[k]);
  return {train, val};
}

namespace {

struct Example {
  const FeatureMatrix* features;
  std::vector<int> units;
};

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double validation_wer(const Seq2SeqModel& model, const std::vector<const corpus::Utterance*>& val) {
  Seq2SeqDecodeConfig greedy;
  greedy.beam = 1;
  eval::WERBreakdown total;
  for (size_t s = 0; s < val.size(); s += 32) {
    std::vector<const FeatureMatrix*> feats;
    for (size_t k = s; k < std::min(val.size(), s + 32); ++k) feats.push_back(&val[k]->features);
    auto hyps = s2s_decode_batch(model, feats, greedy);
    for (size_t k = 0; k < hyps.size(); ++k) total += eval::wer(*val[s + k]->transcript, hyps[k].words);
  }
  return total.wer_percent();
}

}  // namespace

Seq2SeqModel train_seq2seq(const std::vector<const corpus::Utterance*>& train,
                           const std::vector<const corpus::Utterance*>& validation, const text::SubwordVocab& vocab,
                           const Seq2SeqConfig& cfg, Seq2SeqTrainReport* report) {
  if (train.empty()) throw Error("train_seq2seq: empty training set");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw Error("train_seq2seq: invalid batch size or epoch count");
  cfg.spec_augment.validate();
  Seq2SeqModel model(vocab, static_cast<int>(train[0]->features.cols()), cfg);
  auto& net = model.net();

  std::vector<Example> data;
  int skipped = 0;
  for (const auto* u : train) {
    if (!u->transcript) throw Error("utterance " + u->utt_id + " has no transcript");
    if (u->transcript->empty()) {
      ++skipped;
      continue;
    }
    data.push_back({&u->features, text::encode(vocab, join_words(*u->transcript))});
  }
  if (data.empty()) throw Error("train_seq2seq: every training transcript is empty");
  std::vector<const corpus::Utterance*> val;
  for (const auto* u : validation)
    if (u->transcript && !u->transcript->empty()) val.push_back(u);

  std::vector<size_t> by_length(data.size());
  std::iota(by_length.begin(), by_length.end(), 0);
  std::stable_sort(by_length.begin(), by_length.end(),
                   [&](size_t a, size_t b) { return data[a].features->rows() < data[b].features->rows(); });
  std::vector<std::vector<size_t>> batches;
  for (size_t s = 0; s < by_length.size(); s += cfg.batch_size)
    batches.emplace_back(by_length.begin() + s, by_length.begin() + std::min(by_length.size(), s + cfg.batch_size));

  const long total_steps = std::max<long>(1, long(cfg.epochs) * long(batches.size()));
  const auto schedule = LRSchedule::scaled_to(total_steps, cfg.peak_rate, cfg.floor_rate);
  nn::Adam<float> opt(net.params());
  std::mt19937_64 rng(cfg.seed);
  const bool augment = !cfg.spec_augment.is_identity();

  Seq2SeqTrainReport rep;
  rep.skipped = skipped;
  std::vector<MatrixXf> best;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(batches.begin(), batches.end(), rng);
    double epoch_loss = 0;
    for (const auto& batch : batches) {
      std::vector<FeatureMatrix> augmented;
      augmented.reserve(batch.size());
      std::vector<const FeatureMatrix*> feats;
      std::vector<std::vector<int>> targets;
      for (size_t k : batch) {
        if (augment) {
          augmented.push_back(spec_augment(*data[k].features, cfg.spec_augment, mix(mix(cfg.seed, epoch), k)));
          feats.push_back(&augmented.back());
        } else {
          feats.push_back(data[k].features);
        }
        targets.push_back(data[k].units);
      }
      net.params().zero_grad();
      epoch_loss += net.loss(feats, targets, cfg.label_smoothing, vocab.bos(), vocab.eos(), true) * double(batch.size());
      nn::clip_grad_norm(net.params(), static_cast<float>(cfg.clip));
      opt.step(net.params(), static_cast<float>(lr_at(schedule, ++step)));
    }
    rep.epoch_losses.push_back(epoch_loss / double(data.size()));
    if (val.empty()) continue;
    double w = validation_wer(model, val);
    rep.validation_wers.push_back(w);
    if (rep.best_epoch < 0 || w < rep.best_validation_wer) {
      rep.best_epoch = epoch;
      rep.best_validation_wer = w;
      best.clear();
      for (const auto& p : net.params().all()) best.push_back(p->value);
    }
  }
  if (!best.empty()) {
    const auto& params = net.params().all();
    for (size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  }
  if (report) *report = rep;
  return model;
}

}  // namespace cdasr::s2s
