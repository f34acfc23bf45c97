#include "cdasr/corpus/language.hpp"

#include "cdasr/hash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace cdasr::corpus {

std::string to_string(Domain d) { return d == Domain::CTS ? "CTS" : "BN"; }
std::string to_string(EvalSubset s) { return s == EvalSubset::News ? "news" : "topical"; }

Domain domain_from_string(const std::string& s) {
  if (s == "CTS") return Domain::CTS;
  if (s == "BN") return Domain::BN;
  throw Error("unknown domain '" + s + "'");
}

EvalSubset eval_subset_from_string(const std::string& s) {
  if (s == "news") return EvalSubset::News;
  if (s == "topical") return EvalSubset::Topical;
  throw Error("unknown eval subset '" + s + "'");
}

namespace {

json channel_json(const ChannelConfig& c) {
  return {{"gain_scale", c.gain_scale}, {"bias_scale", c.bias_scale}, {"noise", c.noise}};
}

ChannelConfig channel_from(const json& j, ChannelConfig c) {
  c.gain_scale = j.value("gain_scale", c.gain_scale);
  c.bias_scale = j.value("bias_scale", c.bias_scale);
  c.noise = j.value("noise", c.noise);
  return c;
}

int sample_index(const Eigen::Ref<const VectorXd>& probs, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0) continue;
    acc += probs[k];
    last = static_cast<int>(k);
    if (u < acc) return last;
  }
  return last;
}

VectorXd zipf_over(const std::vector<int>& ranked, int vocab, double exponent) {
  VectorXd p = VectorXd::Zero(vocab);
  for (size_t r = 0; r < ranked.size(); ++r) p[ranked[r]] = 1.0 / std::pow(double(r + 1), exponent);
  return p / p.sum();
}

MatrixXd bigram_rows(const VectorXd& base, const std::vector<std::vector<int>>& successors, double weight) {
  const auto V = base.size();
  MatrixXd t(V, V);
  for (Eigen::Index w = 0; w < V; ++w) {
    t.row(w) = base.transpose();
    const auto& succ = successors[w];
    if (succ.empty()) continue;
    t.row(w) *= (1.0 - weight);
    double norm = 0;
    for (size_t k = 0; k < succ.size(); ++k) norm += std::pow(0.5, double(k));
    for (size_t k = 0; k < succ.size(); ++k) t(w, succ[k]) += weight * std::pow(0.5, double(k)) / norm;
  }
  return t;
}

ChannelTransform make_channel(const ChannelConfig& c, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  ChannelTransform ch;
  ch.gain = MatrixXd::Identity(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) ch.gain(i, j) += c.gain_scale * n01(rng) / std::sqrt(double(dim));
  ch.bias = VectorXd(dim);
  for (int i = 0; i < dim; ++i) ch.bias[i] = c.bias_scale * n01(rng);
  ch.noise = c.noise;
  return ch;
}

VectorXd expected_counts(const WordDistribution& dist, int min_len, int max_len) {
  const double span = max_len - min_len + 1;
  VectorXd pi = dist.start;
  VectorXd acc = VectorXd::Zero(pi.size());
  for (int i = 0; i < max_len; ++i) {
    // P(sentence length > i)
    double survive = i < min_len ? 1.0 : double(max_len - i) / span;
    acc += survive * pi;
    pi = dist.transition.transpose() * pi;
  }
  return acc;
}

}  // namespace

GeneratorConfig GeneratorConfig::from_json(const json& j) {
  GeneratorConfig c;
  c.num_graphemes = j.value("num_graphemes", c.num_graphemes);
  c.word_count = j.value("word_count", c.word_count);
  c.min_word_len = j.value("min_word_len", c.min_word_len);
  c.max_word_len = j.value("max_word_len", c.max_word_len);
  c.cts_only_fraction = j.value("cts_only_fraction", c.cts_only_fraction);
  c.bn_only_fraction = j.value("bn_only_fraction", c.bn_only_fraction);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.emission_scale = j.value("emission_scale", c.emission_scale);
  c.min_duration = j.value("min_duration", c.min_duration);
  c.max_duration = j.value("max_duration", c.max_duration);
  c.boundary_min_duration = j.value("boundary_min_duration", c.boundary_min_duration);
  c.boundary_max_duration = j.value("boundary_max_duration", c.boundary_max_duration);
  c.successors = j.value("successors", c.successors);
  c.successor_weight = j.value("successor_weight", c.successor_weight);
  c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
  c.topic_shift = j.value("topic_shift", c.topic_shift);
  c.min_sentence_words = j.value("min_sentence_words", c.min_sentence_words);
  c.max_sentence_words = j.value("max_sentence_words", c.max_sentence_words);
  c.divergence_floor = j.value("divergence_floor", c.divergence_floor);
  c.max_frames = j.value("max_frames", c.max_frames);
  if (j.contains("cts_channel")) c.cts_channel = channel_from(j["cts_channel"], c.cts_channel);
  if (j.contains("bn_channel")) c.bn_channel = channel_from(j["bn_channel"], c.bn_channel);
  return c;
}

json GeneratorConfig::to_json() const {
  return {{"num_graphemes", num_graphemes},
          {"word_count", word_count},
          {"min_word_len", min_word_len},
          {"max_word_len", max_word_len},
          {"cts_only_fraction", cts_only_fraction},
          {"bn_only_fraction", bn_only_fraction},
          {"feature_dim", feature_dim},
          {"emission_scale", emission_scale},
          {"min_duration", min_duration},
          {"max_duration", max_duration},
          {"boundary_min_duration", boundary_min_duration},
          {"boundary_max_duration", boundary_max_duration},
          {"successors", successors},
          {"successor_weight", successor_weight},
          {"zipf_exponent", zipf_exponent},
          {"topic_shift", topic_shift},
          {"min_sentence_words", min_sentence_words},
          {"max_sentence_words", max_sentence_words},
          {"divergence_floor", divergence_floor},
          {"max_frames", max_frames},
          {"cts_channel", channel_json(cts_channel)},
          {"bn_channel", channel_json(bn_channel)}};
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined state
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double LanguageSpec::topic_mix(std::optional<EvalSubset> subset) {
  if (!subset) return 0.5;
  return *subset == EvalSubset::News ? 0.7 : 0.3;
}

int LanguageSpec::symbol_of(char grapheme) const {
  if (grapheme == kBoundary) return 0;
  auto pos = graphemes.find(grapheme);
  return pos == std::string::npos ? -1 : static_cast<int>(pos) + 1;
}

int LanguageSpec::word_index(const std::string& w) const {
  auto it = word_ids.find(w);
  return it == word_ids.end() ? -1 : it->second;
}

VectorXd LanguageSpec::unigram_marginal(Domain d, std::optional<EvalSubset> subset) const {
  const int lo = config.min_sentence_words, hi = config.max_sentence_words;
  VectorXd counts;
  if (d == Domain::CTS) {
    counts = expected_counts(cts, lo, hi);
  } else {
    double a = topic_mix(subset);
    counts = a * expected_counts(bn_topics[0], lo, hi) + (1 - a) * expected_counts(bn_topics[1], lo, hi);
  }
  return counts / counts.sum();
}

std::string LanguageSpec::identifier() const {
  return "lang-" + sha256_hex(config.to_json().dump() + "#" + std::to_string(rng_seed)).substr(0, 16);
}

double total_variation(const VectorXd& p, const VectorXd& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

LanguageSpec build_language_spec(const GeneratorConfig& config, uint64_t seed) {
  const auto& c = config;
  if (c.num_graphemes < 2 || c.num_graphemes > 26) throw Error("num_graphemes must be in [2, 26]");
  if (c.word_count < 4) throw Error("word_count must be at least 4");
  if (c.min_word_len < 1 || c.max_word_len < c.min_word_len) throw Error("invalid word length range");
  if (c.min_duration < 1 || c.max_duration < c.min_duration || c.boundary_min_duration < 1 ||
      c.boundary_max_duration < c.boundary_min_duration)
    throw Error("invalid duration range");
  if (c.min_sentence_words < 1 || c.max_sentence_words < c.min_sentence_words)
    throw Error("invalid sentence length range");
  if (c.cts_only_fraction < 0 || c.bn_only_fraction < 0 || c.cts_only_fraction + c.bn_only_fraction >= 1.0)
    throw Error("domain-only fractions must be non-negative and leave a shared vocabulary");
  if (c.successor_weight < 0 || c.successor_weight >= 1) throw Error("successor_weight must be in [0, 1)");

  const int n_bn_only = static_cast<int>(std::lround(c.bn_only_fraction * c.word_count));
  const int n_cts_only = static_cast<int>(std::lround(c.cts_only_fraction * c.word_count));
  if (n_bn_only == 0 && c.divergence_floor > 0)
    throw Error("mismatch unachievable: BN-only vocabulary is empty");

  std::mt19937_64 rng(seed);
  LanguageSpec spec;
  spec.config = config;
  spec.rng_seed = seed;
  for (int g = 0; g < c.num_graphemes; ++g) spec.graphemes += static_cast<char>('a' + g);

  std::set<std::string> seen;
  std::uniform_int_distribution<int> len_dist(c.min_word_len, c.max_word_len);
  std::uniform_int_distribution<int> g_dist(0, c.num_graphemes - 1);
  long attempts = 0;
  while (static_cast<int>(spec.words.size()) < c.word_count) {
    if (++attempts > 1000L * c.word_count) throw Error("cannot generate enough distinct words for the inventory");
    std::string w;
    int len = len_dist(rng);
    for (int k = 0; k < len; ++k) w += spec.graphemes[g_dist(rng)];
    if (seen.insert(w).second) spec.words.push_back(w);
  }
  for (size_t k = 0; k < spec.words.size(); ++k) spec.word_ids[spec.words[k]] = static_cast<int>(k);

  const int V = c.word_count;
  std::vector<int> perm(V);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  spec.in_cts.assign(V, true);
  spec.in_bn.assign(V, true);
  for (int k = 0; k < n_cts_only; ++k) spec.in_bn[perm[k]] = false;
  for (int k = n_cts_only; k < n_cts_only + n_bn_only; ++k) spec.in_cts[perm[k]] = false;

  std::vector<int> cts_vocab, bn_vocab;
  for (int w = 0; w < V; ++w) {
    if (spec.in_cts[w]) cts_vocab.push_back(w);
    if (spec.in_bn[w]) bn_vocab.push_back(w);
  }

  auto ranked = [&](std::vector<int> vocab) {
    std::shuffle(vocab.begin(), vocab.end(), rng);
    return vocab;
  };
  auto successors_for = [&](const std::vector<int>& vocab, const std::vector<bool>& member) {
    std::vector<std::vector<int>> succ(V);
    const int k = std::min<int>(c.successors, static_cast<int>(vocab.size()));
    for (int w = 0; w < V; ++w) {
      if (!member[w]) continue;
      std::vector<int> pool = vocab;
      std::shuffle(pool.begin(), pool.end(), rng);
      succ[w].assign(pool.begin(), pool.begin() + k);
    }
    return succ;
  };

  std::vector<int> cts_rank = ranked(cts_vocab);
  VectorXd cts_base = zipf_over(cts_rank, V, c.zipf_exponent);
  spec.cts.start = cts_base;
  spec.cts.transition = bigram_rows(cts_base, successors_for(cts_vocab, spec.in_cts), c.successor_weight);

  std::vector<int> topic_a = ranked(bn_vocab);
  std::vector<int> topic_b = topic_a;
  {
    // reshuffle a fraction of rank positions among themselves
    std::vector<int> pos(topic_b.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::shuffle(pos.begin(), pos.end(), rng);
    pos.resize(static_cast<size_t>(std::lround(c.topic_shift * topic_b.size())));
    std::vector<int> moved;
    for (int p : pos) moved.push_back(topic_b[p]);
    std::shuffle(moved.begin(), moved.end(), rng);
    for (size_t k = 0; k < pos.size(); ++k) topic_b[pos[k]] = moved[k];
  }
  auto bn_succ = successors_for(bn_vocab, spec.in_bn);
  for (int t = 0; t < 2; ++t) {
    VectorXd base = zipf_over(t == 0 ? topic_a : topic_b, V, c.zipf_exponent);
    spec.bn_topics[t].start = base;
    spec.bn_topics[t].transition = bigram_rows(base, bn_succ, c.successor_weight);
  }

  std::normal_distribution<double> n01(0.0, 1.0);
  spec.emission_means = MatrixXd(c.num_graphemes + 1, c.feature_dim);
  for (Eigen::Index i = 0; i < spec.emission_means.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.emission_means.cols(); ++j)
      spec.emission_means(i, j) = c.emission_scale * n01(rng);
  spec.durations.assign(c.num_graphemes + 1, {c.min_duration, c.max_duration});
  spec.durations[0] = {c.boundary_min_duration, c.boundary_max_duration};

  spec.cts_channel = make_channel(c.cts_channel, c.feature_dim, rng);
  spec.bn_channel = make_channel(c.bn_channel, c.feature_dim, rng);

  double tv = total_variation(spec.unigram_marginal(Domain::CTS), spec.unigram_marginal(Domain::BN));
  if (tv < c.divergence_floor)
    throw Error("mismatch unachievable: domain total-variation distance " + std::to_string(tv) + " < floor " +
                std::to_string(c.divergence_floor));
  return spec;
}

WordSeq sample_sentence(const LanguageSpec& spec, Domain domain, std::optional<EvalSubset> subset, uint64_t seed) {
  std::mt19937_64 rng(seed);
  int len = std::uniform_int_distribution<int>(spec.config.min_sentence_words, spec.config.max_sentence_words)(rng);
  const WordDistribution* dist = &spec.cts;
  if (domain == Domain::BN) {
    bool topic_a = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < LanguageSpec::topic_mix(subset);
    dist = &spec.bn_topics[topic_a ? 0 : 1];
  }
  WordSeq out;
  int w = sample_index(dist->start, rng);
  out.push_back(spec.words[w]);
  for (int i = 1; i < len; ++i) {
    w = sample_index(dist->transition.row(w).transpose(), rng);
    out.push_back(spec.words[w]);
  }
  return out;
}

RenderedUtterance render_aligned(const WordSeq& transcript, Domain domain, const LanguageSpec& spec, uint64_t seed) {
  if (transcript.empty()) throw Error("render_features: empty transcript");
  std::vector<int> symbols;
  for (size_t i = 0; i < transcript.size(); ++i) {
    if (spec.word_index(transcript[i]) < 0) throw Error("render_features: out-of-vocabulary word '" + transcript[i] + "'");
    if (i) symbols.push_back(0);
    for (char ch : transcript[i]) symbols.push_back(spec.symbol_of(ch));
  }
  std::mt19937_64 rng(seed);
  RenderedUtterance r;
  for (int s : symbols) {
    auto [lo, hi] = spec.durations[s];
    int d = std::uniform_int_distribution<int>(lo, hi)(rng);
    r.frame_symbols.insert(r.frame_symbols.end(), d, s);
  }
  const auto& ch = spec.channel(domain);
  const int F = spec.config.feature_dim;
  const auto T = static_cast<Eigen::Index>(r.frame_symbols.size());
  r.features.resize(T, F);
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd x(F);
  for (Eigen::Index t = 0; t < T; ++t) {
    x = ch.gain * spec.emission_means.row(r.frame_symbols[t]).transpose() + ch.bias;
    for (int j = 0; j < F; ++j) {
      double noise = ch.noise > 0 ? ch.noise * n01(rng) : 0.0;
      r.features(t, j) = static_cast<float>(x[j] + noise);
    }
  }
  return r;
}

FeatureMatrix render_features(const WordSeq& transcript, Domain domain, const LanguageSpec& spec, uint64_t seed) {
  return render_aligned(transcript, domain, spec, seed).features;
}

}  // namespace cdasr::corpus
