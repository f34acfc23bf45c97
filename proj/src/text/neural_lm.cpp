#include "cdasr/text/neural_lm.hpp"

#include "cdasr/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cdasr::text {

NeuralLMConfig NeuralLMConfig::from_json(const json& j) {
  NeuralLMConfig c;
  c.layers = j.value("layers", c.layers);
  c.dim = j.value("dim", c.dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.peak_rate = j.value("peak_rate", c.peak_rate);
  c.floor_rate = j.value("floor_rate", c.floor_rate);
  c.clip = j.value("clip", c.clip);
  c.seed = j.value("seed", c.seed);
  c.zero_init_output = j.value("zero_init_output", c.zero_init_output);
  return c;
}

json NeuralLMConfig::to_json() const {
  return {{"layers", layers},         {"dim", dim},         {"embed_dim", embed_dim},
          {"batch_size", batch_size}, {"max_steps", max_steps}, {"peak_rate", peak_rate},
          {"floor_rate", floor_rate}, {"clip", clip},       {"seed", seed},
          {"zero_init_output", zero_init_output}};
}

NeuralLM::NeuralLM(SubwordVocab vocab, NeuralLMConfig cfg)
    : vocab_(std::move(vocab)), cfg_(cfg), net_(std::make_unique<NeuralLMNet<float>>(vocab_.size(), cfg_)) {}

Checkpoint NeuralLM::to_checkpoint() const {
  Checkpoint ck;
  ck.config = {{"kind", "neural_lm"}, {"lm", cfg_.to_json()}, {"vocab", vocab_.to_json()}};
  net_->params().export_to(ck);
  return ck;
}

NeuralLM NeuralLM::from_checkpoint(const Checkpoint& ck) {
  if (!ck.config.is_object() || ck.config.value("kind", "") != "neural_lm") throw Error("checkpoint is not a neural LM");
  NeuralLM lm(SubwordVocab::from_json(ck.config.at("vocab")), NeuralLMConfig::from_json(ck.config.at("lm")));
  lm.net_->params().import_from(ck);
  return lm;
}

namespace {

double mean_nll(const NeuralLMNet<float>& net, const SubwordVocab& vocab, const std::vector<std::vector<int>>& seqs) {
  double total = 0;
  long count = 0;
  for (size_t start = 0; start < seqs.size(); start += 64) {
    std::vector<std::vector<int>> batch(seqs.begin() + start, seqs.begin() + std::min(seqs.size(), start + 64));
    for (const auto& row : net.score(batch, vocab.bos(), vocab.eos()))
      for (float lp : row) {
        total -= lp;
        ++count;
      }
  }
  return count ? total / count : 0.0;
}

}  // namespace

NeuralLM train_neural_lm(const std::vector<std::vector<int>>& sequences, const SubwordVocab& vocab,
                         const NeuralLMConfig& cfg, const std::vector<std::vector<int>>& heldout,
                         NeuralLMTrainReport* report) {
  if (sequences.empty()) throw Error("train_neural_lm: no training sequences");
  for (const auto& s : sequences)
    for (int u : s)
      if (u < 0 || u >= vocab.size()) throw Error("train_neural_lm: sequence unit outside the configured vocabulary");

  NeuralLM lm(vocab, cfg);
  auto& net = lm.net();
  if (report && !heldout.empty()) report->initial_heldout_ppl = std::exp(mean_nll(net, vocab, heldout));

  nn::Adam<float> opt(net.params());
  const auto schedule = s2s::LRSchedule::scaled_to(cfg.max_steps, cfg.peak_rate, cfg.floor_rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();
  for (int step = 0; step < cfg.max_steps; ++step) {
    std::vector<std::vector<int>> batch;
    while (static_cast<int>(batch.size()) < std::min<int>(cfg.batch_size, static_cast<int>(sequences.size()))) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(sequences[order[cursor++]]);
    }
    net.params().zero_grad();
    float loss = net.train_batch(batch, vocab.bos(), vocab.eos());
    nn::clip_grad_norm(net.params(), static_cast<float>(cfg.clip));
    opt.step(net.params(), static_cast<float>(s2s::lr_at(schedule, step + 1)));
    if (report) report->step_losses.push_back(loss);
  }
  if (report && !heldout.empty()) report->final_heldout_ppl = std::exp(mean_nll(net, vocab, heldout));
  return lm;
}

double neural_lm_logprob(const NeuralLM& lm, const std::vector<int>& prefix, int unit) {
  if (unit < 0 || unit >= lm.vocab().size()) throw Error("neural_lm_logprob: unit not in vocabulary");
  auto state = lm.net().start(lm.vocab().bos());
  for (int u : prefix) state = lm.net().advance(state, u);
  return state.logprobs[unit];
}

double neural_lm_sequence_logprob(const NeuralLM& lm, const std::vector<int>& units, bool include_eos) {
  auto rows = lm.net().score({units}, lm.vocab().bos(), lm.vocab().eos());
  double total = 0;
  for (size_t k = 0; k < rows[0].size(); ++k)
    if (include_eos || k + 1 < rows[0].size()) total += rows[0][k];
  return total;
}

double neural_lm_perplexity(const NeuralLM& lm, const std::vector<std::vector<int>>& sequences) {
  return std::exp(mean_nll(lm.net(), lm.vocab(), sequences));
}

}  // namespace cdasr::text
