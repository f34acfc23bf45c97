#pragma once

#include "cdasr/common.hpp"
#include "cdasr/io.hpp"

#include <array>
#include <unordered_map>
#include <optional>
#include <string>
#include <vector>

namespace cdasr::corpus {

enum class Domain { CTS, BN };
enum class EvalSubset { News, Topical };

std::string to_string(Domain d);
std::string to_string(EvalSubset s);
Domain domain_from_string(const std::string& s);
EvalSubset eval_subset_from_string(const std::string& s);

/// The word-boundary symbol. It is rendered acoustically between words and is the
/// separator in both the grapheme alphabet and the subword vocabulary.
inline constexpr char kBoundary = '_';

struct ChannelConfig {
  double gain_scale = 0.0;  // gain = I + gain_scale * N(0,1)/sqrt(F)
  double bias_scale = 0.0;
  double noise = 0.5;
};

struct GeneratorConfig {
  int num_graphemes = 12;
  int word_count = 300;
  int min_word_len = 2;
  int max_word_len = 5;
  double cts_only_fraction = 0.25;
  double bn_only_fraction = 0.3;
  int feature_dim = 16;
  double emission_scale = 1.0;
  int min_duration = 4;
  int max_duration = 7;
  int boundary_min_duration = 3;
  int boundary_max_duration = 4;
  int successors = 4;
  double successor_weight = 0.7;
  double zipf_exponent = 1.1;
  double topic_shift = 0.3;
  int min_sentence_words = 3;
  int max_sentence_words = 7;
  double divergence_floor = 0.3;
  int max_frames = 400;
  ChannelConfig cts_channel{0.0, 0.0, 0.5};
  ChannelConfig bn_channel{0.8, 0.8, 0.7};

  static GeneratorConfig from_json(const json& j);
  json to_json() const;
};

struct ChannelTransform {
  MatrixXd gain;
  VectorXd bias;
  double noise = 0.0;
};

/// Sentence model for one domain or topic: first-word distribution plus word bigram rows.
struct WordDistribution {
  VectorXd start;
  MatrixXd transition;  // row = previous word
};

struct LanguageSpec {
  GeneratorConfig config;
  uint64_t rng_seed = 0;
  std::string graphemes;            // inventory, one char per grapheme
  std::vector<std::string> words;   // spelled over graphemes
  std::unordered_map<std::string, int> word_ids;
  std::vector<bool> in_cts;
  std::vector<bool> in_bn;
  MatrixXd emission_means;          // row 0 = boundary symbol, row 1+g = grapheme g
  std::vector<std::pair<int, int>> durations;  // per emission symbol, inclusive range
  WordDistribution cts;
  std::array<WordDistribution, 2> bn_topics;
  ChannelTransform cts_channel;
  ChannelTransform bn_channel;

  /// Topic-A weight for BN sentences of an eval subset (or the generic BN mix).
  static double topic_mix(std::optional<EvalSubset> subset);

  const ChannelTransform& channel(Domain d) const { return d == Domain::CTS ? cts_channel : bn_channel; }
  int symbol_of(char grapheme) const;
  int word_index(const std::string& w) const;

  /// Exact expected word frequency of sampled sentences (normalized).
  VectorXd unigram_marginal(Domain d, std::optional<EvalSubset> subset = std::nullopt) const;

  std::string identifier() const;
};

/// Builds a spec satisfying every LanguageSpec invariant, or throws when the requested
/// domain mismatch cannot be produced.
LanguageSpec build_language_spec(const GeneratorConfig& config, uint64_t seed);

double total_variation(const VectorXd& p, const VectorXd& q);

struct RenderedUtterance {
  FeatureMatrix features;
  std::vector<int> frame_symbols;  // emission symbol per frame (0 = boundary)
};

FeatureMatrix render_features(const WordSeq& transcript, Domain domain, const LanguageSpec& spec, uint64_t seed);
RenderedUtterance render_aligned(const WordSeq& transcript, Domain domain, const LanguageSpec& spec, uint64_t seed);

WordSeq sample_sentence(const LanguageSpec& spec, Domain domain, std::optional<EvalSubset> subset, uint64_t seed);

uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace cdasr::corpus
