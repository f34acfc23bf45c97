#pragma once

#include "cdasr/corpus/corpus.hpp"
#include "cdasr/modular/acoustic_model.hpp"
#include "cdasr/modular/decoder.hpp"
#include "cdasr/s2s/decoder.hpp"
#include "cdasr/text/lexicon.hpp"
#include "cdasr/text/neural_lm.hpp"
#include "cdasr/text/ngram.hpp"

#include <optional>

namespace cdasr::sst {

enum class SeedModel { S0, H0, H1, H2 };
enum class Paradigm { Seq2Seq, Modular };

std::string to_string(SeedModel s);
std::string to_string(Paradigm p);
SeedModel seed_model_from_string(const std::string& s);
Paradigm paradigm_from_string(const std::string& s);
inline bool is_seq2seq(SeedModel s) { return s == SeedModel::S0; }

/// Text sets added on top of supervised + pseudo transcripts for one post-training LM.
using LMAsset = std::vector<std::string>;

struct SSTPlan {
  SeedModel seed_model = SeedModel::H1;
  Paradigm target = Paradigm::Seq2Seq;
  json decode = json::object();       // pseudotranscription settings of the seed's own decoder
  std::vector<LMAsset> lm_assets{{}};  // e.g. {{}, {"set1"}, {"set1", "set2"}}
  bool keep_all = true;
  std::optional<double> min_score_per_frame;  // only when keep_all is false
  uint64_t seed = 1;

  /// Throws on inconsistent settings, including any external LM for a seq2seq seed.
  void validate() const;
  static SSTPlan from_json(const json& j);
  json to_json() const;
  std::string hash() const;
};

struct PseudoTranscript {
  WordSeq words;
  double total_score = 0;
  int num_frames = 0;
  std::string provenance;
};

struct TranscriptManifest {
  std::map<std::string, PseudoTranscript> entries;

  std::string serialize() const;  // one JSON object per line, sorted by utt_id
  static TranscriptManifest deserialize(const std::string& text);
  void save(const fs::path& path) const { write_file_atomic(path, serialize()); }
  static TranscriptManifest load(const fs::path& path) { return deserialize(read_file(path)); }
};

struct ModularSeed {
  const modular::ModularAM* am = nullptr;
  const text::Lexicon* lexicon = nullptr;
  const text::NGramLM* lm = nullptr;
  modular::ModularDecodeConfig decode;
  std::string id;
};

struct Seq2SeqSeed {
  const s2s::Seq2SeqModel* model = nullptr;
  s2s::Seq2SeqDecodeConfig decode;
  std::string id;
};

TranscriptManifest pseudotranscribe(const ModularSeed& seed, const std::vector<const corpus::Utterance*>& unlabeled);
/// Refuses fusion: seq2seq seeds pseudotranscribe without an external LM.
TranscriptManifest pseudotranscribe(const Seq2SeqSeed& seed, const std::vector<const corpus::Utterance*>& unlabeled);

struct TrainingEntry {
  std::string utt_id;
  WordSeq transcript;
  bool pseudo = false;
  std::string provenance;  // "supervised" or the seed id
};

struct TrainingManifest {
  std::vector<TrainingEntry> entries;

  size_t size() const { return entries.size(); }
  std::string serialize() const;
  static TrainingManifest deserialize(const std::string& text);
};

/// Supervised entries (in order) followed by pseudotranscripts (by id). With keep_all = false only
/// pseudotranscripts whose total_score / num_frames reaches `min_score_per_frame` are kept.
TrainingManifest merge_training_set(const std::vector<const corpus::Utterance*>& sup, const TranscriptManifest& pseudo,
                                    bool keep_all, std::optional<double> min_score_per_frame = std::nullopt);

/// Utterances of the merged set with their (pseudo)transcripts, features taken from `corpus`.
std::vector<corpus::Utterance> materialize(const TrainingManifest& merged, const corpus::CorpusManifest& corpus);

struct SeedAssets {
  fs::path checkpoint;  // modular acoustic model or seq2seq model
  fs::path lexicon;     // modular seeds only
  fs::path lm;          // modular seeds only (ARPA)
};

struct SSTInputs {
  const corpus::CorpusManifest* corpus = nullptr;
  std::vector<std::string> external_words;  // word list behind the expanded lexicon tier
  text::SubwordVocab vocab;                 // seq2seq targets and neural LMs
  std::string graphemes;                    // modular alphabet
  SeedAssets seed;
  modular::ModularAMConfig modular_am;
  s2s::Seq2SeqConfig seq2seq;
  text::NeuralLMConfig neural_lm;
  double ngram_discount = 0.7;
};

/// Artifacts of a completed run, all inside the output directory.
struct SSTResult {
  fs::path model;                 // model.ckpt
  fs::path semisup_lexicon;       // lexicon_semisup.txt
  fs::path expanded_lexicon;      // lexicon_expanded.txt
  std::vector<fs::path> lms;      // one per plan.lm_assets entry (ARPA or neural checkpoint)
  fs::path report;                // report.json
};

/// pseudotranscribe -> merge -> train the target paradigm from scratch -> semisup lexicon tiers and LMs.
/// Stages persist their outputs in `out_dir` and are skipped on a rerun when their inputs are unchanged.
/// The seed checkpoint is only read by the first stage. On failure a partial report is written and the
/// error rethrown. Stage timings go to timings.json so the report itself is reproducible.
SSTResult run_sst(const SSTPlan& plan, const SSTInputs& inputs, const fs::path& out_dir);

/// Name of the LM file for one asset list, e.g. "lm_semisup+set1.arpa".
std::string lm_file_name(const LMAsset& asset, Paradigm target);

}  // namespace cdasr::sst
