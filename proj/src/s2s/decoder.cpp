#include "cdasr/s2s/decoder.hpp"

#include <algorithm>

namespace cdasr::s2s {

Seq2SeqDecodeConfig Seq2SeqDecodeConfig::from_json(const json& j) {
  Seq2SeqDecodeConfig c;
  c.beam = j.value("beam", c.beam);
  c.max_length = j.value("max_length", c.max_length);
  return c;
}

json Seq2SeqDecodeConfig::to_json() const { return {{"beam", beam}, {"max_length", max_length}}; }

namespace {

using Net = Seq2SeqNet<float>;
using LMState = text::NeuralLMNet<float>::State;

struct Beam {
  std::vector<int> units;
  double am = 0;
  double lm = 0;
  LMState lm_state;
};

struct Candidate {
  double score;
  double am;
  double lm;
  int beam;
  int unit;
};

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  return a.total_score > b.total_score || (a.total_score == b.total_score && a.units < b.units);
}

Hypothesis search(const Seq2SeqModel& model, const Net::Encoded& e, int width, int max_len,
                  const std::optional<Fusion>& fusion) {
  const auto& net = model.net();
  const auto& vocab = model.vocab();
  const bool use_lm = fusion && fusion->weight != 0.0;
  const double w = use_lm ? fusion->weight : 0.0;
  const int V = net.vocab_size();

  std::vector<Beam> live(1);
  if (use_lm) live[0].lm_state = fusion->lm->net().start(vocab.bos());
  Net::State state = net.initial_state(1);
  std::vector<Hypothesis> done;

  for (int step = 0; step <= max_len && !live.empty(); ++step) {
    std::vector<int> prev;
    for (const auto& b : live) prev.push_back(b.units.empty() ? vocab.bos() : b.units.back());
    MatrixXf logp = net.step(e, prev, state);

    std::vector<Candidate> cands;
    for (int k = 0; k < static_cast<int>(live.size()); ++k)
      for (int u = 0; u < V; ++u) {
        if (u == vocab.bos() || u == vocab.unk()) continue;
        if (step == max_len && u != vocab.eos()) continue;
        double am = live[k].am + logp(u, k);
        double lm = use_lm ? live[k].lm + live[k].lm_state.logprobs(u) : 0.0;
        cands.push_back({am + w * lm, am, lm, k, u});
      }
    size_t keep = std::min(cands.size(), static_cast<size_t>(width));
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.unit < b.unit;
    });

    std::vector<Beam> next;
    std::vector<Eigen::Index> cols;
    for (size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      if (c.unit == vocab.eos()) {
        Hypothesis h;
        h.units = live[c.beam].units;
        h.am_score = c.am;
        h.lm_score = c.lm;
        h.total_score = c.score / double(h.units.size() + 1);
        done.push_back(std::move(h));
        continue;
      }
      Beam nb;
      nb.units = live[c.beam].units;
      nb.units.push_back(c.unit);
      nb.am = c.am;
      nb.lm = c.lm;
      if (use_lm) nb.lm_state = fusion->lm->net().advance(live[c.beam].lm_state, c.unit);
      next.push_back(std::move(nb));
      cols.push_back(c.beam);
    }
    Net::State gathered = net.initial_state(static_cast<Eigen::Index>(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) {
      gathered.h.col(k) = state.h.col(cols[k]);
      gathered.c.col(k) = state.c.col(cols[k]);
      gathered.ctx.col(k) = state.ctx.col(cols[k]);
    }
    state = std::move(gathered);
    live = std::move(next);
    if (width != kUnlimitedBeam && done.size() >= static_cast<size_t>(width)) break;
  }

  Hypothesis best = done.front();
  for (const auto& h : done)
    if (ranks_before(h, best)) best = h;
  best.words = text::decode_words(vocab, best.units);
  return best;
}

}  // namespace

Hypothesis s2s_decode_encoded(const Seq2SeqModel& model, const Net::Encoded& encoded, const Seq2SeqDecodeConfig& cfg) {
  if (cfg.beam < 1) throw Error("s2s_decode: beam must be at least 1");
  if (cfg.max_length < 0) throw Error("s2s_decode: negative max_length");
  if (cfg.fusion) {
    if (!cfg.fusion->lm) throw Error("s2s_decode: fusion requested without a language model");
    if (cfg.fusion->lm->vocab().fingerprint() != model.vocab().fingerprint())
      throw Error("s2s_decode: fusion LM vocabulary differs from the model vocabulary");
  }
  const int max_len = cfg.max_length > 0 ? cfg.max_length : static_cast<int>(encoded.enc.cols());
  if (cfg.beam == kUnlimitedBeam) return search(model, encoded, cfg.beam, max_len, cfg.fusion);
  Hypothesis best = search(model, encoded, 1, max_len, cfg.fusion);
  for (int width = 2; width <= cfg.beam; ++width) {
    Hypothesis h = search(model, encoded, width, max_len, cfg.fusion);
    if (ranks_before(h, best)) best = std::move(h);
  }
  return best;
}

Hypothesis s2s_decode(const Seq2SeqModel& model, const FeatureMatrix& features, const Seq2SeqDecodeConfig& cfg) {
  return s2s_decode_batch(model, {&features}, cfg)[0];
}

std::vector<Hypothesis> s2s_decode_batch(const Seq2SeqModel& model, const std::vector<const FeatureMatrix*>& feats,
                                         const Seq2SeqDecodeConfig& cfg) {
  for (const auto* f : feats)
    if (f->cols() != model.feature_dim()) throw Error("feature dimension does not match the seq2seq model");
  std::vector<Hypothesis> out;
  if (feats.empty()) return out;
  for (const auto& e : model.net().encode(feats)) out.push_back(s2s_decode_encoded(model, e, cfg));
  return out;
}

}  // namespace cdasr::s2s
