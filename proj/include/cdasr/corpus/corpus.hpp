#pragma once

#include "cdasr/corpus/language.hpp"

#include <map>

namespace cdasr::corpus {

enum class Split { SupCts, UnsupCts, UnsupBn, EvalBn };
inline constexpr std::array<Split, 4> kAllSplits{Split::SupCts, Split::UnsupCts, Split::UnsupBn, Split::EvalBn};

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Utterance {
  std::string utt_id;
  Domain domain = Domain::CTS;
  Split split = Split::SupCts;
  std::optional<EvalSubset> eval_subset;
  FeatureMatrix features;
  std::optional<WordSeq> transcript;

  int num_frames() const { return static_cast<int>(features.rows()); }
};

/// Frame budgets per split and text-set sizes relative to the supervised transcripts.
struct SplitPlan {
  double sup_cts = 0;
  double unsup_cts = 0;
  double unsup_bn = 0;
  double eval_bn = 0;
  double set1_ratio = 2.0;   // words, relative to supervised transcript words
  double set2_ratio = 25.0;
  double set2_cts_fraction = 0.2;

  double budget(Split s) const;

  /// Audio-hour ratios of the Swahili row (68.3 / 57.6 / 149.0 / 5.3 h) times `frames_per_hour`.
  /// The eval budget is additionally multiplied by `eval_scale`.
  static SplitPlan swahili_scaled(double frames_per_hour = 1500.0, double eval_scale = 4.0);
  static SplitPlan from_json(const json& j);
  json to_json() const;
};

struct CorpusManifest {
  std::map<Split, std::vector<Utterance>> splits;
  std::map<std::string, std::vector<std::string>> text_sets;  // "set1", "set2"
  std::map<std::string, WordSeq> unsup_truth;                  // diagnostics only
  std::string language_spec_ref;

  const std::vector<Utterance>& split(Split s) const { return splits.at(s); }
  long long total_frames(Split s) const;
};

CorpusManifest synth_corpus(const LanguageSpec& spec, const SplitPlan& plan, uint64_t seed);

/// Directory layout: manifest.jsonl, features/<utt>.cdaf, text/set{1,2}.txt, unsup_truth.jsonl
void write_corpus(const CorpusManifest& corpus, const fs::path& dir);
CorpusManifest read_corpus(const fs::path& dir);

json utterance_manifest_line(const Utterance& u, const std::string& feature_file);

std::vector<std::string> transcripts_of(const std::vector<Utterance>& utts);

}  // namespace cdasr::corpus
