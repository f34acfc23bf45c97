#include "cdasr/sst/sst.hpp"

#include "cdasr/eval/wer.hpp"
#include "cdasr/hash.hpp"

#include <chrono>
#include <set>
#include <sstream>

namespace cdasr::sst {

std::string to_string(SeedModel s) {
  switch (s) {
    case SeedModel::S0: return "S0";
    case SeedModel::H0: return "H0";
    case SeedModel::H1: return "H1";
    case SeedModel::H2: return "H2";
  }
  throw Error("unknown seed model");
}

std::string to_string(Paradigm p) { return p == Paradigm::Seq2Seq ? "seq2seq" : "modular"; }

SeedModel seed_model_from_string(const std::string& s) {
  if (s == "S0") return SeedModel::S0;
  if (s == "H0") return SeedModel::H0;
  if (s == "H1") return SeedModel::H1;
  if (s == "H2") return SeedModel::H2;
  throw Error("unknown seed model '" + s + "' (expected S0, H0, H1 or H2)");
}

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "seq2seq" || s == "s2s") return Paradigm::Seq2Seq;
  if (s == "modular" || s == "hyb" || s == "hybrid") return Paradigm::Modular;
  throw Error("unknown target paradigm '" + s + "' (expected seq2seq or modular)");
}

void SSTPlan::validate() const {
  if (!decode.is_object()) throw Error("SST plan: decode settings must be an object");
  if (is_seq2seq(seed_model)) {
    bool fused = (decode.contains("fusion") && !decode.at("fusion").is_null()) ||
                 (decode.contains("lm_weight") && decode.at("lm_weight").get<double>() != 0.0) ||
                 decode.contains("fusion_lm");
    if (fused)
      throw Error("SST plan: a seq2seq seed model must pseudotranscribe without an external LM "
                  "(fused seq2seq pseudotranscripts made retraining unstable)");
    auto c = s2s::Seq2SeqDecodeConfig::from_json(decode);
    if (c.beam < 1) throw Error("SST plan: decode beam must be at least 1");
  } else {
    auto c = modular::ModularDecodeConfig::from_json(decode);
    if (c.beam < 1) throw Error("SST plan: decode beam must be at least 1");
  }
  for (const auto& asset : lm_assets) {
    std::set<std::string> seen;
    for (const auto& name : asset) {
      if (name != "set1" && name != "set2") throw Error("SST plan: unknown LM text set '" + name + "'");
      if (!seen.insert(name).second) throw Error("SST plan: text set '" + name + "' listed twice");
    }
  }
  if (keep_all && min_score_per_frame) throw Error("SST plan: a score filter requires keep_all = false");
  if (!keep_all && !min_score_per_frame) throw Error("SST plan: keep_all = false requires min_score_per_frame");
}

SSTPlan SSTPlan::from_json(const json& j) {
  SSTPlan p;
  p.seed_model = seed_model_from_string(j.at("seed_model").get<std::string>());
  p.target = paradigm_from_string(j.at("target").get<std::string>());
  p.decode = j.value("decode", json::object());
  if (j.contains("lm_assets")) p.lm_assets = j.at("lm_assets").get<std::vector<LMAsset>>();
  p.keep_all = j.value("keep_all", true);
  if (j.contains("min_score_per_frame") && !j.at("min_score_per_frame").is_null())
    p.min_score_per_frame = j.at("min_score_per_frame").get<double>();
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

json SSTPlan::to_json() const {
  json j = {{"seed_model", to_string(seed_model)},
            {"target", to_string(target)},
            {"decode", decode},
            {"lm_assets", lm_assets},
            {"keep_all", keep_all},
            {"seed", seed}};
  j["min_score_per_frame"] = min_score_per_frame ? json(*min_score_per_frame) : json(nullptr);
  return j;
}

std::string SSTPlan::hash() const { return sha256_hex(to_json().dump()); }

std::string TranscriptManifest::serialize() const {
  std::string out;
  for (const auto& [id, e] : entries) {
    json j = {{"utt_id", id},
              {"words", e.words},
              {"total_score", e.total_score},
              {"num_frames", e.num_frames},
              {"provenance", e.provenance}};
    out += j.dump() + "\n";
  }
  return out;
}

TranscriptManifest TranscriptManifest::deserialize(const std::string& text) {
  TranscriptManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    PseudoTranscript e;
    e.words = j.at("words").get<WordSeq>();
    e.total_score = j.at("total_score").get<double>();
    e.num_frames = j.at("num_frames").get<int>();
    e.provenance = j.at("provenance").get<std::string>();
    if (!m.entries.emplace(j.at("utt_id").get<std::string>(), std::move(e)).second)
      throw Error("transcript manifest: duplicate utterance id");
  }
  return m;
}

namespace {

void check_unique(const std::vector<const corpus::Utterance*>& utts) {
  std::set<std::string> ids;
  for (const auto* u : utts)
    if (!ids.insert(u->utt_id).second) throw Error("pseudotranscribe: utterance " + u->utt_id + " listed twice");
}

template <typename DecodeBatch>
TranscriptManifest transcribe(const std::vector<const corpus::Utterance*>& unlabeled, const std::string& id,
                              DecodeBatch&& decode_batch) {
  check_unique(unlabeled);
  TranscriptManifest m;
  for (size_t s = 0; s < unlabeled.size(); s += 32) {
    std::vector<const FeatureMatrix*> feats;
    for (size_t k = s; k < std::min(unlabeled.size(), s + 32); ++k) feats.push_back(&unlabeled[k]->features);
    std::vector<Hypothesis> hyps = decode_batch(feats);
    for (size_t k = 0; k < hyps.size(); ++k) {
      const auto* u = unlabeled[s + k];
      m.entries[u->utt_id] = {std::move(hyps[k].words), hyps[k].total_score, u->num_frames(), id};
    }
  }
  return m;
}

}  // namespace

TranscriptManifest pseudotranscribe(const ModularSeed& seed, const std::vector<const corpus::Utterance*>& unlabeled) {
  if (!seed.am || !seed.lexicon || !seed.lm) throw Error("pseudotranscribe: incomplete modular seed");
  modular::ModularDecoder decoder(*seed.lexicon, *seed.lm, seed.am->alphabet(), seed.decode);
  return transcribe(unlabeled, seed.id, [&](const std::vector<const FeatureMatrix*>& feats) {
    std::vector<Hypothesis> out;
    for (const auto& lp : seed.am->log_posteriors(feats)) out.push_back(decoder.decode(lp));
    return out;
  });
}

TranscriptManifest pseudotranscribe(const Seq2SeqSeed& seed, const std::vector<const corpus::Utterance*>& unlabeled) {
  if (!seed.model) throw Error("pseudotranscribe: missing seq2seq seed");
  if (seed.decode.fusion)
    throw Error("pseudotranscribe: a seq2seq seed model must decode without an external LM "
                "(fused seq2seq pseudotranscripts made retraining unstable)");
  return transcribe(unlabeled, seed.id, [&](const std::vector<const FeatureMatrix*>& feats) {
    return s2s::s2s_decode_batch(*seed.model, feats, seed.decode);
  });
}

std::string TrainingManifest::serialize() const {
  std::string out;
  for (const auto& e : entries) {
    json j = {{"utt_id", e.utt_id}, {"transcript", e.transcript}, {"pseudo", e.pseudo}, {"provenance", e.provenance}};
    out += j.dump() + "\n";
  }
  return out;
}

TrainingManifest TrainingManifest::deserialize(const std::string& text) {
  TrainingManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    m.entries.push_back({j.at("utt_id").get<std::string>(), j.at("transcript").get<WordSeq>(),
                         j.at("pseudo").get<bool>(), j.at("provenance").get<std::string>()});
  }
  return m;
}

TrainingManifest merge_training_set(const std::vector<const corpus::Utterance*>& sup, const TranscriptManifest& pseudo,
                                    bool keep_all, std::optional<double> min_score_per_frame) {
  if (!keep_all && !min_score_per_frame) throw Error("merge_training_set: filtering requires a minimum score");
  TrainingManifest m;
  std::set<std::string> ids;
  for (const auto* u : sup) {
    if (!u->transcript) throw Error("merge_training_set: supervised utterance " + u->utt_id + " has no transcript");
    if (!ids.insert(u->utt_id).second) throw Error("merge_training_set: utterance id collision on " + u->utt_id);
    m.entries.push_back({u->utt_id, *u->transcript, false, "supervised"});
  }
  for (const auto& [id, e] : pseudo.entries) {
    if (!ids.insert(id).second) throw Error("merge_training_set: utterance id collision on " + id);
    if (!keep_all) {
      if (e.num_frames <= 0) throw Error("merge_training_set: pseudotranscript " + id + " has no frames");
      if (e.total_score / double(e.num_frames) < *min_score_per_frame) continue;
    }
    m.entries.push_back({id, e.words, true, e.provenance});
  }
  return m;
}

std::vector<corpus::Utterance> materialize(const TrainingManifest& merged, const corpus::CorpusManifest& corpus) {
  std::map<std::string, const corpus::Utterance*> by_id;
  for (const auto& [split, utts] : corpus.splits)
    for (const auto& u : utts) by_id[u.utt_id] = &u;
  std::vector<corpus::Utterance> out;
  out.reserve(merged.size());
  for (const auto& e : merged.entries) {
    auto it = by_id.find(e.utt_id);
    if (it == by_id.end()) throw Error("materialize: utterance " + e.utt_id + " is not in the corpus");
    corpus::Utterance u = *it->second;
    u.transcript = e.transcript;
    out.push_back(std::move(u));
  }
  return out;
}

std::string lm_file_name(const LMAsset& asset, Paradigm target) {
  std::string name = "lm_semisup";
  for (const auto& s : asset) name += "+" + s;
  return name + (target == Paradigm::Modular ? ".arpa" : ".ckpt");
}

namespace {

std::vector<const corpus::Utterance*> pointers(const std::vector<corpus::Utterance>& utts) {
  std::vector<const corpus::Utterance*> out;
  for (const auto& u : utts) out.push_back(&u);
  return out;
}

std::string corpus_hash(const corpus::CorpusManifest& c) {
  ContentHasher h;
  h.add(c.language_spec_ref);
  for (const auto& [split, utts] : c.splits) {
    h.add(corpus::to_string(split));
    for (const auto& u : utts) {
      h.add(u.utt_id);
      h.add(std::string_view(reinterpret_cast<const char*>(u.features.data()), u.features.size() * sizeof(float)));
      h.add(u.transcript ? join_words(*u.transcript) : std::string("<none>"));
    }
  }
  for (const auto& [name, text] : c.text_sets) {
    h.add(name);
    for (const auto& s : text) h.add(s);
  }
  return h.hex();
}

std::string file_hash(const fs::path& p) { return p.empty() || !fs::exists(p) ? "" : sha256_hex(read_file(p)); }

// Diagnostic pseudotranscript WER against the retained truth of the unlabeled splits.
json diagnostic_wers(const TranscriptManifest& pseudo, const corpus::CorpusManifest& c) {
  json out = json::object();
  eval::WERBreakdown all;
  for (auto split : {corpus::Split::UnsupCts, corpus::Split::UnsupBn}) {
    if (!c.splits.count(split)) continue;
    eval::WERBreakdown total;
    for (const auto& u : c.split(split)) {
      auto truth = c.unsup_truth.find(u.utt_id);
      auto hyp = pseudo.entries.find(u.utt_id);
      if (truth == c.unsup_truth.end() || hyp == pseudo.entries.end() || truth->second.empty()) continue;
      total += eval::wer(truth->second, hyp->second.words);
    }
    if (total.ref_len > 0) out[corpus::to_string(split)] = total.wer_percent();
    all += total;
  }
  if (all.ref_len > 0) out["all"] = all.wer_percent();
  return out;
}

class StageRunner {
 public:
  explicit StageRunner(fs::path dir) : dir_(std::move(dir)) {
    if (fs::exists(dir_ / "stages.json")) state_ = read_json(dir_ / "stages.json");
  }

  /// Runs `fn` unless every output exists and the stage last ran with the same input hash.
  template <typename Fn>
  void run(const std::string& name, const std::string& input_hash, const std::vector<fs::path>& outputs, Fn&& fn) {
    bool fresh = state_.contains(name) && state_.at(name) == input_hash;
    for (const auto& o : outputs) fresh = fresh && fs::exists(o);
    auto t0 = std::chrono::steady_clock::now();
    if (!fresh) {
      state_.erase(name);
      save();
      fn();
      state_[name] = input_hash;
      save();
    }
    timings_[name] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                      {"reused", fresh}};
  }

  const json& timings() const { return timings_; }

  std::string recorded(const std::string& key) const { return state_.value(key, std::string()); }
  void record(const std::string& key, const std::string& value) {
    state_[key] = value;
    save();
  }

 private:
  void save() const { write_file_atomic(dir_ / "stages.json", state_.dump(2) + "\n"); }

  fs::path dir_;
  json state_ = json::object();
  json timings_ = json::object();
};

}  // namespace

SSTResult run_sst(const SSTPlan& plan, const SSTInputs& inputs, const fs::path& out_dir) {
  plan.validate();
  if (!inputs.corpus) throw Error("run_sst: no corpus");
  fs::create_directories(out_dir);
  const auto& c = *inputs.corpus;

  SSTResult result;
  result.model = out_dir / "model.ckpt";
  result.semisup_lexicon = out_dir / "lexicon_semisup.txt";
  result.expanded_lexicon = out_dir / "lexicon_expanded.txt";
  result.report = out_dir / "report.json";
  for (const auto& a : plan.lm_assets) result.lms.push_back(out_dir / lm_file_name(a, plan.target));
  const fs::path pseudo_path = out_dir / "pseudo.jsonl";
  const fs::path merged_path = out_dir / "merged.jsonl";
  const fs::path train_report_path = out_dir / "train_report.json";

  json report = {{"plan", plan.to_json()}, {"plan_hash", plan.hash()}, {"status", "running"}};
  StageRunner stages(out_dir);
  auto write_report = [&]() {
    write_file_atomic(result.report, report.dump(2) + "\n");
    write_file_atomic(out_dir / "timings.json", stages.timings().dump(2) + "\n");
  };

  try {
    const std::string chash = corpus_hash(c);
    std::vector<const corpus::Utterance*> sup, unlabeled;
    for (const auto& u : c.split(corpus::Split::SupCts)) sup.push_back(&u);
    for (auto split : {corpus::Split::UnsupCts, corpus::Split::UnsupBn})
      if (c.splits.count(split))
        for (const auto& u : c.split(split)) unlabeled.push_back(&u);
    report["corpus_hash"] = chash;

    // 1. pseudotranscribe with the seed's own decoder
    std::string seed_hash = stages.recorded("seed_hash");
    if (fs::exists(inputs.seed.checkpoint) || seed_hash.empty()) {
      seed_hash =
          sha256_hex(file_hash(inputs.seed.checkpoint) + file_hash(inputs.seed.lexicon) + file_hash(inputs.seed.lm));
      stages.record("seed_hash", seed_hash);
    }
    const std::string seed_id = to_string(plan.seed_model) + ":" + seed_hash.substr(0, 16);
    stages.run("pseudotranscribe", sha256_hex(chash + seed_hash + plan.decode.dump() + to_string(plan.seed_model)),
               {pseudo_path}, [&] {
                 if (!fs::exists(inputs.seed.checkpoint))
                   throw Error("run_sst: seed checkpoint " + inputs.seed.checkpoint.string() + " not found");
                 TranscriptManifest pseudo;
                 if (is_seq2seq(plan.seed_model)) {
                   auto model = s2s::Seq2SeqModel::load(inputs.seed.checkpoint);
                   pseudo = pseudotranscribe(Seq2SeqSeed{&model, s2s::Seq2SeqDecodeConfig::from_json(plan.decode), seed_id},
                                             unlabeled);
                 } else {
                   auto am = modular::ModularAM::load(inputs.seed.checkpoint);
                   auto lex = text::Lexicon::load(inputs.seed.lexicon, text::LexiconTier::Expanded);
                   auto lm = text::NGramLM::load_arpa(inputs.seed.lm);
                   pseudo = pseudotranscribe(
                       ModularSeed{&am, &lex, &lm, modular::ModularDecodeConfig::from_json(plan.decode), seed_id},
                       unlabeled);
                 }
                 pseudo.save(pseudo_path);
               });
    const std::string pseudo_text = read_file(pseudo_path);
    const auto pseudo = TranscriptManifest::deserialize(pseudo_text);
    const std::string pseudo_hash = sha256_hex(pseudo_text);
    report["seed"] = {{"model", to_string(plan.seed_model)},
                      {"id", pseudo.entries.empty() ? seed_id : pseudo.entries.begin()->second.provenance},
                      {"decode", plan.decode}};
    long empty = 0;
    for (const auto& [id, e] : pseudo.entries) empty += e.words.empty();
    report["pseudotranscripts"] = {{"hash", pseudo_hash},
                                   {"count", pseudo.entries.size()},
                                   {"empty", empty},
                                   {"diagnostic_wer", diagnostic_wers(pseudo, c)}};

    // 2. merge
    std::string min_score = plan.min_score_per_frame ? std::to_string(*plan.min_score_per_frame) : "none";
    stages.run("merge", sha256_hex(chash + pseudo_hash + (plan.keep_all ? "all" : "filter") + min_score), {merged_path},
               [&] {
                 auto merged = merge_training_set(sup, pseudo, plan.keep_all, plan.min_score_per_frame);
                 write_file_atomic(merged_path, merged.serialize());
               });
    const std::string merged_text = read_file(merged_path);
    const auto merged = TrainingManifest::deserialize(merged_text);
    const std::string merged_hash = sha256_hex(merged_text);
    long pseudo_kept = 0;
    for (const auto& e : merged.entries) pseudo_kept += e.pseudo;
    report["merged"] = {{"hash", merged_hash},
                        {"count", merged.size()},
                        {"supervised", sup.size()},
                        {"pseudo", pseudo_kept}};

    // 3. fresh training of the target paradigm
    auto s2s_cfg = inputs.seq2seq;
    s2s_cfg.seed = plan.seed;
    auto am_cfg = inputs.modular_am;
    am_cfg.seed = plan.seed;
    const std::string train_inputs =
        sha256_hex(merged_hash + chash + to_string(plan.target) + std::to_string(plan.seed) +
                   (plan.target == Paradigm::Seq2Seq ? s2s_cfg.to_json().dump() + inputs.vocab.fingerprint()
                                                     : am_cfg.to_json().dump() + inputs.graphemes));
    stages.run("train", train_inputs, {result.model, train_report_path}, [&] {
      auto utts = materialize(merged, c);
      json tr;
      if (plan.target == Paradigm::Seq2Seq) {
        auto [sup_train, val] = s2s::split_validation(sup, s2s_cfg.validation_fraction, plan.seed);
        std::set<std::string> val_ids;
        for (const auto* u : val) val_ids.insert(u->utt_id);
        std::vector<const corpus::Utterance*> train;
        int empty_excluded = 0;
        for (const auto& u : utts) {
          if (val_ids.count(u.utt_id)) continue;
          if (u.transcript->empty()) {
            ++empty_excluded;
            continue;
          }
          train.push_back(&u);
        }
        s2s::Seq2SeqTrainReport rep;
        auto model = s2s::train_seq2seq(train, val, inputs.vocab, s2s_cfg, &rep);
        model.save(result.model);
        tr = {{"paradigm", "seq2seq"},
              {"train_utterances", train.size()},
              {"validation_utterances", val.size()},
              {"empty_excluded", empty_excluded},
              {"best_epoch", rep.best_epoch},
              {"best_validation_wer", rep.best_validation_wer},
              {"validation_wers", rep.validation_wers},
              {"epoch_losses", rep.epoch_losses}};
      } else {
        modular::ModularTrainReport rep;
        auto am = modular::train_modular_am(pointers(utts), modular::Alphabet(inputs.graphemes), am_cfg, {}, &rep);
        am.save(result.model);
        tr = {{"paradigm", "modular"},
              {"train_utterances", utts.size()},
              {"skipped", rep.skipped},
              {"epoch_losses", rep.epoch_losses}};
      }
      write_file_atomic(train_report_path, tr.dump(2) + "\n");
    });
    report["training"] = read_json(train_report_path);

    // 4. semisup lexicon tiers and LMs over supervised + pseudo transcripts
    std::vector<std::string> sup_text, pseudo_text_sents;
    for (const auto& e : merged.entries) {
      if (e.transcript.empty()) continue;
      (e.pseudo ? pseudo_text_sents : sup_text).push_back(join_words(e.transcript));
    }
    ContentHasher words_hash;
    for (const auto& w : inputs.external_words) words_hash.add(w);
    std::vector<fs::path> asset_outputs = result.lms;
    asset_outputs.push_back(result.semisup_lexicon);
    asset_outputs.push_back(result.expanded_lexicon);
    json assets_cfg = {{"lm_assets", plan.lm_assets},
                       {"target", to_string(plan.target)},
                       {"discount", inputs.ngram_discount},
                       {"seed", plan.seed}};
    if (plan.target == Paradigm::Seq2Seq) {
      assets_cfg["neural_lm"] = inputs.neural_lm.to_json();
      assets_cfg["vocab"] = inputs.vocab.fingerprint();
    }
    stages.run("assets", sha256_hex(merged_hash + chash + words_hash.hex() + assets_cfg.dump()), asset_outputs, [&] {
      text::build_lexicon({sup_text, pseudo_text_sents}, text::LexiconTier::Semisup).save(result.semisup_lexicon);
      text::build_lexicon({sup_text, pseudo_text_sents, inputs.external_words}, text::LexiconTier::Expanded)
          .save(result.expanded_lexicon);
      for (size_t k = 0; k < plan.lm_assets.size(); ++k) {
        std::vector<const std::vector<std::string>*> sources{&sup_text, &pseudo_text_sents};
        for (const auto& name : plan.lm_assets[k]) sources.push_back(&c.text_sets.at(name));
        if (plan.target == Paradigm::Modular) {
          std::vector<text::WeightedText> texts;
          for (const auto* s : sources) texts.push_back({s, 1});
          text::train_ngram(texts, inputs.ngram_discount).save_arpa(result.lms[k]);
        } else {
          std::vector<std::vector<int>> seqs;
          for (const auto* s : sources)
            for (const auto& sentence : *s) seqs.push_back(text::encode(inputs.vocab, sentence));
          auto cfg = inputs.neural_lm;
          cfg.seed = plan.seed;
          text::train_neural_lm(seqs, inputs.vocab, cfg).save(result.lms[k]);
        }
      }
    });

    json artifacts = json::object();
    for (const auto& p : asset_outputs) artifacts[p.filename().string()] = file_hash(p);
    artifacts[result.model.filename().string()] = file_hash(result.model);
    report["artifacts"] = artifacts;
    report["status"] = "complete";
    write_report();
  } catch (const std::exception& e) {
    report["status"] = "failed";
    report["error"] = e.what();
    write_report();
    throw;
  }
  return result;
}

}  // namespace cdasr::sst
