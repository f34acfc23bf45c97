#include "cdasr/modular/decoder.hpp"

#include "cdasr/nn/functional.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cdasr::modular {

using nn::log_add;

ModularDecodeConfig ModularDecodeConfig::from_json(const json& j) {
  ModularDecodeConfig c;
  c.beam = j.value("beam", c.beam);
  c.lm_weight = j.value("lm_weight", c.lm_weight);
  c.word_insertion = j.value("word_insertion", c.word_insertion);
  return c;
}

json ModularDecodeConfig::to_json() const {
  return {{"beam", beam}, {"lm_weight", lm_weight}, {"word_insertion", word_insertion}};
}

ModularDecoder::ModularDecoder(const text::Lexicon& lexicon, const text::NGramLM& lm, const Alphabet& alphabet,
                               ModularDecodeConfig cfg)
    : lm_(&lm), alphabet_(alphabet), cfg_(cfg) {
  if (lexicon.size() == 0) throw Error("decode_modular: empty lexicon");
  if (cfg_.beam < 1) throw Error("decode_modular: beam must be at least 1");
  int oov = 0;
  trie_.emplace_back();
  for (const auto& [word, spelling] : lexicon.entries) {
    (void)spelling;
    if (!alphabet_.spellable(word)) throw Error("lexicon word '" + word + "' is not spellable in the alphabet");
    int index = static_cast<int>(words_.size());
    words_.push_back(word);
    int id = lm.id(word);
    oov_.push_back(id < 0);
    lm_ids_.push_back(id < 0 ? lm.unk() : id);
    oov += id < 0;
    int node = 0;
    for (char ch : word) {
      int label = alphabet_.index(ch);
      auto& kids = trie_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), std::make_pair(label, -1));
      if (it != kids.end() && it->first == label) {
        node = it->second;
      } else {
        int fresh = static_cast<int>(trie_.size());
        kids.insert(it, {label, fresh});
        trie_.emplace_back();
        node = fresh;
      }
    }
    trie_[node].word = index;
  }
  oov_class_size_ = std::max(1, oov);
}

double ModularDecoder::word_logprob(int older, int prev, int word_index) const {
  double lp = lm_->logprob_ids(older, prev, lm_ids_[word_index]);
  if (oov_[word_index]) lp -= std::log(double(oov_class_size_));
  return lp;
}

double ModularDecoder::end_logprob(int older, int prev) const { return lm_->logprob_ids(older, prev, lm_->eos()); }

namespace {

struct Prefix {
  int parent = -1;
  int label = -1;  // last emitted label (-1 for the empty prefix)
  int node = 0;    // trie position; 0 right after a boundary
  int older = text::NGramLM::kNone;
  int prev = text::NGramLM::kNone;
  double lm = 0;  // raw LM log-probability of completed words
  int words = 0;
};

struct Mass {
  double blank = kNegInf;
  double nonblank = kNegInf;
  double total() const { return log_add(blank, nonblank); }
};

}  // namespace

namespace {

bool better(const Hypothesis& a, const Hypothesis& b) {
  return a.total_score > b.total_score || (a.total_score == b.total_score && a.words < b.words);
}

}  // namespace

Hypothesis ModularDecoder::decode(const Eigen::Ref<const MatrixXd>& log_posteriors) const {
  if (log_posteriors.cols() != alphabet_.size()) throw Error("decode_modular: posterior width differs from alphabet");
  if (cfg_.beam == kUnlimitedBeam) return search(log_posteriors, cfg_.beam);
  Hypothesis best = search(log_posteriors, 1);
  for (int width = 2; width <= cfg_.beam; ++width) {
    Hypothesis h = search(log_posteriors, width);
    if (better(h, best)) best = std::move(h);
  }
  return best;
}

Hypothesis ModularDecoder::search(const Eigen::Ref<const MatrixXd>& log_posteriors, int width) const {
  const double lambda = cfg_.lm_weight;
  const double wip = cfg_.word_insertion;

  std::vector<Prefix> prefixes;
  std::unordered_map<uint64_t, int> child_of;
  Prefix root;
  root.prev = lm_->bos();
  prefixes.push_back(root);

  auto child = [&](int p, int label) {
    uint64_t key = (uint64_t(p) << 8) | uint64_t(label);
    auto it = child_of.find(key);
    if (it != child_of.end()) return it->second;
    Prefix q = prefixes[p];
    q.parent = p;
    q.label = label;
    if (label == Alphabet::kBoundary) {
      int w = trie_[q.node].word;
      q.lm += word_logprob(q.older, q.prev, w);
      q.older = q.prev;
      q.prev = lm_ids_[w];
      q.words += 1;
      q.node = 0;
    } else {
      const auto& kids = trie_[q.node].children;
      auto kit = std::lower_bound(kids.begin(), kids.end(), std::make_pair(label, -1));
      q.node = kit->second;
    }
    int id = static_cast<int>(prefixes.size());
    prefixes.push_back(q);
    child_of.emplace(key, id);
    return id;
  };
  auto prefix_score = [&](int p, const Mass& m) {
    return m.total() + lambda * prefixes[p].lm + wip * prefixes[p].words;
  };

  std::vector<std::pair<int, Mass>> beam{{0, Mass{0.0, kNegInf}}};
  std::unordered_map<int, Mass> next;
  for (Eigen::Index t = 0; t < log_posteriors.rows(); ++t) {
    auto y = log_posteriors.row(t);
    next.clear();
    for (const auto& [p, m] : beam) {
      const Prefix& pre = prefixes[p];
      const double tot = m.total();
      auto& stay = next[p];
      stay.blank = log_add(stay.blank, tot + y(Alphabet::kBlank));
      if (pre.label >= 0) stay.nonblank = log_add(stay.nonblank, m.nonblank + y(pre.label));

      auto extend = [&](int label) {
        int q = child(p, label);
        double src = label == prefixes[p].label ? m.blank : tot;
        if (src == kNegInf) return;
        auto& mass = next[q];
        mass.nonblank = log_add(mass.nonblank, src + y(label));
      };
      const int node = prefixes[p].node;
      for (const auto& kid : trie_[node].children) extend(kid.first);
      if (node != 0 && trie_[node].word >= 0) extend(Alphabet::kBoundary);
    }
    beam.assign(next.begin(), next.end());
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(beam.size());
    for (size_t k = 0; k < beam.size(); ++k) ranked.push_back({prefix_score(beam[k].first, beam[k].second), int(k)});
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return beam[a.second].first < beam[b.second].first;
    });
    size_t keep = std::min<size_t>(ranked.size(), static_cast<size_t>(width));
    std::vector<std::pair<int, Mass>> kept;
    kept.reserve(keep);
    for (size_t k = 0; k < keep; ++k)
      if (ranked[k].first > kNegInf) kept.push_back(beam[ranked[k].second]);
    beam.swap(kept);
  }

  auto labels_of = [&](int p) {
    std::vector<int> labels;
    for (; p > 0; p = prefixes[p].parent) labels.push_back(prefixes[p].label);
    std::reverse(labels.begin(), labels.end());
    return labels;
  };

  Hypothesis best;
  best.total_score = kNegInf;
  bool found = false;
  auto consider = [&](std::vector<int> labels, double lm, int words) {
    double am = ctc_forward_logprob_log(log_posteriors, labels);
    if (am == kNegInf) return;
    double total = am + lambda * lm + wip * words;
    WordSeq ws = alphabet_.words_from(labels);
    if (!found || total > best.total_score || (total == best.total_score && ws < best.words)) {
      best.words = std::move(ws);
      best.units = std::move(labels);
      best.am_score = am;
      best.lm_score = lm;
      best.total_score = total;
      found = true;
    }
  };
  for (const auto& [p, m] : beam) {
    (void)m;
    const Prefix& pre = prefixes[p];
    if (p == 0) {
      consider({}, end_logprob(pre.older, pre.prev), 0);
      continue;
    }
    if (pre.label == Alphabet::kBoundary || trie_[pre.node].word < 0) continue;
    int w = trie_[pre.node].word;
    double lm = pre.lm + word_logprob(pre.older, pre.prev, w) + end_logprob(pre.prev, lm_ids_[w]);
    consider(labels_of(p), lm, pre.words + 1);
  }
  if (!found) {
    // No surviving prefix ends on a complete word; fall back to the empty transcript.
    best = Hypothesis{};
    best.lm_score = end_logprob(text::NGramLM::kNone, lm_->bos());
    best.am_score = ctc_forward_logprob_log(log_posteriors, {});
    best.total_score = best.am_score + lambda * best.lm_score;
  }
  return best;
}

Hypothesis decode_modular(const Eigen::Ref<const MatrixXd>& log_posteriors, const text::Lexicon& lexicon,
                          const text::NGramLM& lm, const Alphabet& alphabet, const ModularDecodeConfig& cfg) {
  return ModularDecoder(lexicon, lm, alphabet, cfg).decode(log_posteriors);
}

}  // namespace cdasr::modular
