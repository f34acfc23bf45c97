#include "cdasr/modular/acoustic_model.hpp"

#include "cdasr/nn/optim.hpp"
#include "cdasr/s2s/schedule.hpp"

#include <iostream>
#include <numeric>
#include <random>

namespace cdasr::modular {

int ModularAMConfig::conv_layers() const {
  int n = 0;
  for (int s = subsample; s > 1; s /= 2) {
    if (s % 2) throw Error("subsample must be a power of two");
    ++n;
  }
  if (subsample < 1) throw Error("subsample must be positive");
  return n;
}

ModularAMConfig ModularAMConfig::from_json(const json& j) {
  ModularAMConfig c;
  c.subsample = j.value("subsample", c.subsample);
  c.conv_dim = j.value("conv_dim", c.conv_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.rnn_layers = j.value("rnn_layers", c.rnn_layers);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.peak_rate = j.value("peak_rate", c.peak_rate);
  c.floor_rate = j.value("floor_rate", c.floor_rate);
  c.clip = j.value("clip", c.clip);
  c.seed = j.value("seed", c.seed);
  return c;
}

json ModularAMConfig::to_json() const {
  return {{"subsample", subsample},   {"conv_dim", conv_dim},     {"hidden", hidden},
          {"rnn_layers", rnn_layers}, {"epochs", epochs},         {"batch_size", batch_size},
          {"peak_rate", peak_rate},   {"floor_rate", floor_rate}, {"clip", clip},
          {"seed", seed}};
}

ModularAM::ModularAM(Alphabet alphabet, int feature_dim, ModularAMConfig cfg)
    : alphabet_(std::move(alphabet)),
      feature_dim_(feature_dim),
      cfg_(cfg),
      net_(std::make_unique<ModularAMNet<float>>(feature_dim, alphabet_.size(), cfg_)) {}

MatrixXd ModularAM::log_posteriors(const FeatureMatrix& features) const {
  return log_posteriors(std::vector<const FeatureMatrix*>{&features})[0];
}

std::vector<MatrixXd> ModularAM::log_posteriors(const std::vector<const FeatureMatrix*>& batch) const {
  for (const auto* f : batch)
    if (f->cols() != feature_dim_) throw Error("feature dimension does not match the acoustic model");
  return net_->log_posteriors(batch);
}

Checkpoint ModularAM::to_checkpoint() const {
  Checkpoint ck;
  ck.config = {{"kind", "modular_am"},
               {"am", cfg_.to_json()},
               {"graphemes", alphabet_.graphemes()},
               {"feature_dim", feature_dim_}};
  net_->params().export_to(ck);
  return ck;
}

ModularAM ModularAM::from_checkpoint(const Checkpoint& ck) {
  if (!ck.config.is_object() || ck.config.value("kind", "") != "modular_am") throw Error("checkpoint is not a modular acoustic model");
  ModularAM am(Alphabet(ck.config.at("graphemes").get<std::string>()), ck.config.at("feature_dim").get<int>(),
               ModularAMConfig::from_json(ck.config.at("am")));
  am.net_->params().import_from(ck);
  return am;
}

namespace {

struct Example {
  const FeatureMatrix* features;
  std::vector<int> labels;
};

std::vector<Example> usable(const std::vector<const corpus::Utterance*>& utts, const Alphabet& alphabet,
                            const ModularAMNet<float>& net, int* skipped, bool warn) {
  std::vector<Example> out;
  for (const auto* u : utts) {
    if (!u->transcript) throw Error("utterance " + u->utt_id + " has no transcript");
    auto labels = alphabet.labels_for(*u->transcript);
    if (ctc_min_frames(labels) > net.out_length(u->num_frames())) {
      if (warn) std::cerr << "warning: skipping " << u->utt_id << ": transcript longer than reduced frame count\n";
      ++*skipped;
      continue;
    }
    out.push_back({&u->features, std::move(labels)});
  }
  return out;
}

double mean_loss(const ModularAMNet<float>& net, const std::vector<Example>& data) {
  if (data.empty()) return 0;
  double total = 0;
  for (size_t start = 0; start < data.size(); start += 32) {
    size_t end = std::min(data.size(), start + 32);
    std::vector<const FeatureMatrix*> feats;
    for (size_t k = start; k < end; ++k) feats.push_back(data[k].features);
    auto lps = net.log_posteriors(feats);
    for (size_t k = start; k < end; ++k) total -= ctc_forward_logprob_log(lps[k - start], data[k].labels);
  }
  return total / double(data.size());
}

}  // namespace

ModularAM train_modular_am(const std::vector<const corpus::Utterance*>& train, const Alphabet& alphabet,
                           const ModularAMConfig& cfg, const std::vector<const corpus::Utterance*>& heldout,
                           ModularTrainReport* report) {
  if (train.empty()) throw Error("train_modular_am: empty training set");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw Error("train_modular_am: invalid batch size or epoch count");
  ModularAM am(alphabet, static_cast<int>(train[0]->features.cols()), cfg);
  auto& net = am.net();
  int skipped = 0;
  auto data = usable(train, alphabet, net, &skipped, true);
  if (data.empty()) throw Error("train_modular_am: every utterance was skipped");
  int held_skipped = 0;
  auto held = usable(heldout, alphabet, net, &held_skipped, false);
  if (report) {
    report->skipped = skipped;
    report->initial_heldout_loss = mean_loss(net, held);
  }

  // Batches of similar length waste less padding; the batch order is shuffled each epoch.
  std::vector<size_t> by_length(data.size());
  std::iota(by_length.begin(), by_length.end(), 0);
  std::stable_sort(by_length.begin(), by_length.end(),
                   [&](size_t a, size_t b) { return data[a].features->rows() < data[b].features->rows(); });
  std::vector<std::vector<size_t>> batches;
  for (size_t s = 0; s < by_length.size(); s += cfg.batch_size)
    batches.emplace_back(by_length.begin() + s, by_length.begin() + std::min(by_length.size(), s + cfg.batch_size));

  const long total_steps = std::max<long>(1, long(cfg.epochs) * long(batches.size()));
  const auto schedule = s2s::LRSchedule::scaled_to(total_steps, cfg.peak_rate, cfg.floor_rate);
  nn::Adam<float> opt(net.params());
  std::mt19937_64 rng(cfg.seed);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(batches.begin(), batches.end(), rng);
    double epoch_loss = 0;
    for (const auto& batch : batches) {
      std::vector<const FeatureMatrix*> feats;
      std::vector<std::vector<int>> labels;
      for (size_t k : batch) {
        feats.push_back(data[k].features);
        labels.push_back(data[k].labels);
      }
      net.params().zero_grad();
      epoch_loss += net.ctc_batch(feats, labels, true) * double(batch.size());
      nn::clip_grad_norm(net.params(), static_cast<float>(cfg.clip));
      opt.step(net.params(), static_cast<float>(s2s::lr_at(schedule, ++step)));
    }
    if (report) report->epoch_losses.push_back(epoch_loss / double(data.size()));
  }
  if (report) report->final_heldout_loss = mean_loss(net, held);
  return am;
}

double modular_heldout_loss(const ModularAM& am, const std::vector<const corpus::Utterance*>& utts) {
  int skipped = 0;
  return mean_loss(am.net(), usable(utts, am.alphabet(), am.net(), &skipped, false));
}

WordSeq greedy_transcribe(const ModularAM& am, const FeatureMatrix& features) {
  return am.alphabet().words_from(ctc_greedy(am.log_posteriors(features)));
}

}  // namespace cdasr::modular
