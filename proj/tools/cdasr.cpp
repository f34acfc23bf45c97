#include "cdasr/eval/matrix.hpp"
#include "cdasr/text/subword.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>

using namespace cdasr;

namespace {

// The generator settings are stored next to the corpus so graphemes and the word list can be recovered.
struct LanguageInfo {
  std::string graphemes;
  std::vector<std::string> words;
};

LanguageInfo language_info(const fs::path& corpus_dir) {
  auto j = read_json(corpus_dir / "language.json");
  LanguageInfo info;
  info.graphemes = j.at("graphemes").get<std::string>();
  for (auto& w : read_lines(corpus_dir / "text" / "words.txt"))
    if (!w.empty()) info.words.push_back(w);
  return info;
}

std::vector<std::string> read_sentences(const fs::path& path) {
  std::vector<std::string> out;
  for (auto& line : read_lines(path))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> gather_text(const std::vector<std::string>& files, const std::string& corpus_dir) {
  std::vector<std::string> out;
  if (!corpus_dir.empty()) {
    auto c = corpus::read_corpus(corpus_dir);
    out = corpus::transcripts_of(c.split(corpus::Split::SupCts));
  }
  for (const auto& f : files) {
    auto s = read_sentences(f);
    out.insert(out.end(), s.begin(), s.end());
  }
  if (out.empty()) throw Error("no training text given (use --text and/or --corpus)");
  return out;
}

std::vector<const corpus::Utterance*> utterances(const corpus::CorpusManifest& c, const std::string& split) {
  std::vector<const corpus::Utterance*> out;
  if (split == "unlabeled") {
    for (auto s : {corpus::Split::UnsupCts, corpus::Split::UnsupBn})
      for (const auto& u : c.split(s)) out.push_back(&u);
    return out;
  }
  for (const auto& u : c.split(corpus::split_from_string(split))) out.push_back(&u);
  return out;
}

json load_config(const std::string& path) { return path.empty() ? json::object() : read_json(path); }

// Reference transcripts from a corpus directory or its manifest.jsonl.
std::vector<corpus::Utterance> reference_manifest(const fs::path& path) {
  fs::path file = fs::is_directory(path) ? path / "manifest.jsonl" : path;
  std::vector<corpus::Utterance> out;
  for (const auto& line : read_lines(file)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    if (!j.contains("transcript")) continue;
    corpus::Utterance u;
    u.utt_id = j.at("utt_id").get<std::string>();
    u.split = corpus::split_from_string(j.at("split").get<std::string>());
    if (j.contains("eval_subset")) u.eval_subset = corpus::eval_subset_from_string(j.at("eval_subset").get<std::string>());
    u.transcript = split_words(j.at("transcript").get<std::string>());
    out.push_back(std::move(u));
  }
  return out;
}

void print_score(const eval::EvalScore& s) {
  for (const auto& [subset, b] : s.subsets)
    std::cout << corpus::to_string(subset) << ": WER " << eval::format_wer(b.wer_percent()) << " (S=" << b.substitutions
              << " D=" << b.deletions << " I=" << b.insertions << " N=" << b.ref_len << ")\n";
  std::cout << "average: " << eval::format_wer(s.average) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain ASR toolkit: synthetic corpora, modular and seq2seq recognizers, self-training"};
  app.require_subcommand(1);

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic corpora")->require_subcommand(1);
  auto* synth = corpus_cmd->add_subcommand("synth", "Generate a language and its corpus");
  std::string synth_config, synth_out;
  uint64_t synth_seed = 1;
  synth->add_option("--config", synth_config, "JSON with optional 'generator' and 'split_plan' objects");
  synth->add_option("--seed", synth_seed, "Language and corpus seed");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->callback([&] {
    auto j = load_config(synth_config);
    auto gen = j.contains("generator") ? corpus::GeneratorConfig::from_json(j["generator"]) : corpus::GeneratorConfig{};
    auto plan = j.contains("split_plan") ? corpus::SplitPlan::from_json(j["split_plan"]) : corpus::SplitPlan::swahili_scaled();
    auto spec = corpus::build_language_spec(gen, synth_seed);
    auto c = corpus::synth_corpus(spec, plan, synth_seed);
    corpus::write_corpus(c, synth_out);
    write_file_atomic(fs::path(synth_out) / "language.json",
                      json{{"generator", gen.to_json()}, {"split_plan", plan.to_json()}, {"seed", synth_seed},
                           {"graphemes", spec.graphemes}, {"identifier", spec.identifier()}}
                          .dump(2) + "\n");
    std::string words;
    for (const auto& w : spec.words) words += w + "\n";
    write_file_atomic(fs::path(synth_out) / "text" / "words.txt", words);
    for (auto s : corpus::kAllSplits)
      std::cout << corpus::to_string(s) << ": " << c.split(s).size() << " utterances, " << c.total_frames(s)
                << " frames\n";
  });

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Subword units")->require_subcommand(1);
  std::string tok_corpus, tok_out, tok_vocab, tok_text, tok_ids;
  std::vector<std::string> tok_files;
  int tok_units = 200;
  auto* tok_train = tok->add_subcommand("train", "Learn a BPE unit inventory");
  tok_train->add_option("--corpus", tok_corpus, "Corpus directory (supervised transcripts)");
  tok_train->add_option("--text", tok_files, "Extra text files, one sentence per line");
  tok_train->add_option("--units", tok_units, "Target inventory size");
  tok_train->add_option("--out", tok_out, "Vocabulary file")->required();
  tok_train->callback([&] {
    std::string graphemes = tok_corpus.empty() ? "" : language_info(tok_corpus).graphemes;
    auto v = text::train_subwords(gather_text(tok_files, tok_corpus), tok_units, graphemes);
    v.save(tok_out);
    std::cout << v.size() << " units\n";
  });
  auto* tok_encode = tok->add_subcommand("encode", "Sentence to unit ids");
  tok_encode->add_option("--vocab", tok_vocab)->required();
  tok_encode->add_option("--text", tok_text, "Sentence (default: stdin lines)");
  tok_encode->callback([&] {
    auto v = text::SubwordVocab::load(tok_vocab);
    auto run = [&](const std::string& s) {
      auto ids = text::encode(v, s);
      for (size_t k = 0; k < ids.size(); ++k) std::cout << (k ? " " : "") << ids[k];
      std::cout << "\n";
    };
    if (!tok_text.empty()) return run(tok_text);
    for (std::string line; std::getline(std::cin, line);) run(line);
  });
  auto* tok_decode = tok->add_subcommand("decode", "Unit ids to sentence");
  tok_decode->add_option("--vocab", tok_vocab)->required();
  tok_decode->add_option("--ids", tok_ids, "Space-separated ids (default: stdin lines)");
  tok_decode->callback([&] {
    auto v = text::SubwordVocab::load(tok_vocab);
    auto run = [&](const std::string& s) {
      std::vector<int> ids;
      for (const auto& t : split_words(s)) ids.push_back(std::stoi(t));
      std::cout << text::decode(v, ids) << "\n";
    };
    if (!tok_ids.empty()) return run(tok_ids);
    for (std::string line; std::getline(std::cin, line);) run(line);
  });

  // lexicon
  auto* lex_cmd = app.add_subcommand("lexicon", "Graphemic lexicons")->require_subcommand(1);
  auto* lex_build = lex_cmd->add_subcommand("build", "Collect the words of the given sources");
  std::string lex_corpus, lex_out, lex_tier = "base";
  std::vector<std::string> lex_files;
  bool lex_words = false;
  lex_build->add_option("--corpus", lex_corpus, "Corpus directory (supervised transcripts)");
  lex_build->add_option("--text", lex_files, "Extra sentence files, e.g. pseudotranscripts");
  lex_build->add_flag("--external-words", lex_words, "Add the corpus word list (expanded tier)");
  lex_build->add_option("--tier", lex_tier, "base, semisup or expanded");
  lex_build->add_option("--out", lex_out)->required();
  lex_build->callback([&] {
    std::vector<std::vector<std::string>> sources{gather_text(lex_files, lex_corpus)};
    if (lex_words) {
      if (lex_corpus.empty()) throw Error("--external-words needs --corpus");
      sources.push_back(language_info(lex_corpus).words);
    }
    auto lex = text::build_lexicon(sources, text::lexicon_tier_from_string(lex_tier));
    lex.save(lex_out);
    std::cout << lex.size() << " words\n";
  });

  // lm
  auto* lm_cmd = app.add_subcommand("lm", "Language models")->require_subcommand(1);
  std::string lm_corpus, lm_out, lm_vocab, lm_config, lm_file, lm_text;
  std::vector<std::string> lm_files;
  double lm_discount = 0.7;
  auto* lm_ngram = lm_cmd->add_subcommand("train-ngram", "Word trigram, ARPA output");
  lm_ngram->add_option("--corpus", lm_corpus, "Corpus directory (supervised transcripts)");
  lm_ngram->add_option("--text", lm_files, "Text files, one sentence per line");
  lm_ngram->add_option("--discount", lm_discount);
  lm_ngram->add_option("--out", lm_out)->required();
  lm_ngram->callback([&] {
    auto sents = gather_text(lm_files, lm_corpus);
    text::train_ngram({{&sents, 1}}, lm_discount).save_arpa(lm_out);
  });
  auto* lm_neural = lm_cmd->add_subcommand("train-neural", "Recurrent subword LM");
  lm_neural->add_option("--corpus", lm_corpus);
  lm_neural->add_option("--text", lm_files);
  lm_neural->add_option("--vocab", lm_vocab)->required();
  lm_neural->add_option("--config", lm_config, "JSON neural LM settings");
  lm_neural->add_option("--out", lm_out)->required();
  lm_neural->callback([&] {
    auto v = text::SubwordVocab::load(lm_vocab);
    std::vector<std::vector<int>> seqs;
    for (const auto& s : gather_text(lm_files, lm_corpus)) seqs.push_back(text::encode(v, s));
    text::train_neural_lm(seqs, v, text::NeuralLMConfig::from_json(load_config(lm_config))).save(lm_out);
  });
  auto* lm_score = lm_cmd->add_subcommand("score", "Per-sentence log probability and perplexity");
  lm_score->add_option("--lm", lm_file, "ARPA file or neural LM checkpoint")->required();
  lm_score->add_option("--text", lm_text, "Sentence file")->required();
  lm_score->callback([&] {
    auto sents = read_sentences(lm_text);
    double total = 0;
    long tokens = 0;
    if (fs::path(lm_file).extension() == ".arpa") {
      auto lm = text::NGramLM::load_arpa(lm_file);
      for (const auto& s : sents) {
        auto words = split_words(s);
        WordSeq history;
        double lp = 0;
        for (const auto& w : words) {
          lp += text::ngram_logprob(lm, history, w);
          history.push_back(w);
        }
        lp += text::ngram_logprob(lm, history, text::kEos);
        std::cout << lp << "\t" << s << "\n";
        total += lp;
        tokens += long(words.size()) + 1;
      }
    } else {
      auto lm = text::NeuralLM::load(lm_file);
      for (const auto& s : sents) {
        auto ids = text::encode(lm.vocab(), s);
        double lp = 0;
        std::vector<int> prefix;
        for (int id : ids) {
          lp += text::neural_lm_logprob(lm, prefix, id);
          prefix.push_back(id);
        }
        lp += text::neural_lm_logprob(lm, prefix, lm.vocab().eos());
        std::cout << lp << "\t" << s << "\n";
        total += lp;
        tokens += long(ids.size()) + 1;
      }
    }
    if (tokens > 0) std::cout << "perplexity " << std::exp(-total / double(tokens)) << " over " << tokens << " tokens\n";
  });

  // am
  auto* am_cmd = app.add_subcommand("am", "Acoustic model training")->require_subcommand(1);
  std::string am_corpus, am_out, am_config, am_vocab;
  int am_epochs = -1;
  auto* am_mod = am_cmd->add_subcommand("train-modular", "CTC grapheme acoustic model on the supervised split");
  am_mod->add_option("--corpus", am_corpus)->required();
  am_mod->add_option("--config", am_config, "JSON acoustic model settings");
  am_mod->add_option("--epochs", am_epochs);
  am_mod->add_option("--out", am_out)->required();
  am_mod->callback([&] {
    auto c = corpus::read_corpus(am_corpus);
    auto cfg = modular::ModularAMConfig::from_json(load_config(am_config));
    if (am_epochs >= 0) cfg.epochs = am_epochs;
    modular::ModularTrainReport rep;
    modular::train_modular_am(utterances(c, "sup_cts"), modular::Alphabet(language_info(am_corpus).graphemes), cfg, {},
                              &rep)
        .save(am_out);
    for (size_t e = 0; e < rep.epoch_losses.size(); ++e) std::cout << "epoch " << e + 1 << " loss " << rep.epoch_losses[e] << "\n";
  });
  auto* am_s2s = am_cmd->add_subcommand("train-seq2seq", "Attention encoder-decoder on the supervised split");
  am_s2s->add_option("--corpus", am_corpus)->required();
  am_s2s->add_option("--vocab", am_vocab)->required();
  am_s2s->add_option("--config", am_config, "JSON seq2seq settings");
  am_s2s->add_option("--epochs", am_epochs);
  am_s2s->add_option("--out", am_out)->required();
  am_s2s->callback([&] {
    auto c = corpus::read_corpus(am_corpus);
    auto cfg = s2s::Seq2SeqConfig::from_json(load_config(am_config));
    if (am_epochs >= 0) cfg.epochs = am_epochs;
    auto [train, val] = s2s::split_validation(utterances(c, "sup_cts"), cfg.validation_fraction, cfg.seed);
    s2s::Seq2SeqTrainReport rep;
    s2s::train_seq2seq(train, val, text::SubwordVocab::load(am_vocab), cfg, &rep).save(am_out);
    for (size_t e = 0; e < rep.epoch_losses.size(); ++e)
      std::cout << "epoch " << e + 1 << " loss " << rep.epoch_losses[e]
                << (e < rep.validation_wers.size() ? " val WER " + eval::format_wer(rep.validation_wers[e]) : "") << "\n";
    std::cout << "kept epoch " << rep.best_epoch + 1 << "\n";
  });

  // decode
  auto* dec_cmd = app.add_subcommand("decode", "Decode a corpus split into a hypothesis manifest")->require_subcommand(1);
  std::string dec_model, dec_corpus, dec_split = "eval_bn", dec_lexicon, dec_tier = "expanded", dec_lm, dec_fusion, dec_out;
  double dec_weight = -1;
  int dec_beam = -1;
  auto write_hyps = [&](const std::vector<const corpus::Utterance*>& utts, const std::vector<Hypothesis>& hyps,
                        const std::string& provenance) {
    sst::TranscriptManifest m;
    for (size_t k = 0; k < utts.size(); ++k)
      m.entries[utts[k]->utt_id] = {hyps[k].words, hyps[k].total_score, utts[k]->num_frames(), provenance};
    m.save(dec_out);
    std::cout << m.entries.size() << " hypotheses written\n";
  };
  auto* dec_mod = dec_cmd->add_subcommand("modular", "Lexicon-constrained prefix beam search with an n-gram LM");
  dec_mod->add_option("--model", dec_model)->required();
  dec_mod->add_option("--corpus", dec_corpus)->required();
  dec_mod->add_option("--split", dec_split, "sup_cts, unsup_cts, unsup_bn, eval_bn or unlabeled");
  dec_mod->add_option("--lexicon", dec_lexicon)->required();
  dec_mod->add_option("--tier", dec_tier, "Tier recorded for the lexicon file");
  dec_mod->add_option("--lm", dec_lm)->required();
  dec_mod->add_option("--lm-weight", dec_weight);
  dec_mod->add_option("--beam", dec_beam);
  dec_mod->add_option("--out", dec_out)->required();
  dec_mod->callback([&] {
    auto c = corpus::read_corpus(dec_corpus);
    auto am = modular::ModularAM::load(dec_model);
    auto lex = text::Lexicon::load(dec_lexicon, text::lexicon_tier_from_string(dec_tier));
    auto lm = text::NGramLM::load_arpa(dec_lm);
    modular::ModularDecodeConfig cfg;
    if (dec_weight >= 0) cfg.lm_weight = dec_weight;
    if (dec_beam > 0) cfg.beam = dec_beam;
    modular::ModularDecoder decoder(lex, lm, am.alphabet(), cfg);
    auto utts = utterances(c, dec_split);
    std::vector<Hypothesis> hyps;
    for (const auto* u : utts) hyps.push_back(decoder.decode(am.log_posteriors(u->features)));
    write_hyps(utts, hyps, "modular");
  });
  auto* dec_s2s = dec_cmd->add_subcommand("seq2seq", "Beam search with optional shallow fusion");
  dec_s2s->add_option("--model", dec_model)->required();
  dec_s2s->add_option("--corpus", dec_corpus)->required();
  dec_s2s->add_option("--split", dec_split);
  dec_s2s->add_option("--fusion-lm", dec_fusion, "Neural LM checkpoint");
  dec_s2s->add_option("--lm-weight", dec_weight);
  dec_s2s->add_option("--beam", dec_beam);
  dec_s2s->add_option("--out", dec_out)->required();
  dec_s2s->callback([&] {
    auto c = corpus::read_corpus(dec_corpus);
    auto model = s2s::Seq2SeqModel::load(dec_model);
    s2s::Seq2SeqDecodeConfig cfg;
    if (dec_beam > 0) cfg.beam = dec_beam;
    std::optional<text::NeuralLM> lm;
    if (!dec_fusion.empty()) {
      lm = text::NeuralLM::load(dec_fusion);
      cfg.fusion = s2s::Fusion{&*lm, dec_weight >= 0 ? dec_weight : 0.1};
    } else if (dec_weight > 0) {
      throw Error("--lm-weight needs --fusion-lm");
    }
    auto utts = utterances(c, dec_split);
    std::vector<const FeatureMatrix*> feats;
    for (const auto* u : utts) feats.push_back(&u->features);
    write_hyps(utts, s2s::s2s_decode_batch(model, feats, cfg), "seq2seq");
  });

  // sst
  auto* sst_cmd = app.add_subcommand("sst", "Self-training")->require_subcommand(1);
  std::string sst_plan, sst_out, sst_corpus, sst_seed_model = "H1", sst_ckpt, sst_lexicon, sst_lm, sst_pseudo;
  int sst_beam = -1;
  double sst_min_score = NAN;
  auto* sst_run = sst_cmd->add_subcommand("run", "pseudotranscribe -> merge -> retrain -> semisup LM assets");
  sst_run->add_option("--plan", sst_plan, "Plan JSON; an 'inputs' object names the corpus, vocab and seed files")->required();
  sst_run->add_option("--out", sst_out)->required();
  sst_run->callback([&] {
    auto j = read_json(sst_plan);
    auto plan = sst::SSTPlan::from_json(j);
    const auto& in = j.at("inputs");
    fs::path corpus_dir = in.at("corpus").get<std::string>();
    auto c = corpus::read_corpus(corpus_dir);
    auto info = language_info(corpus_dir);
    sst::SSTInputs inputs;
    inputs.corpus = &c;
    inputs.external_words = info.words;
    inputs.graphemes = info.graphemes;
    inputs.vocab = text::SubwordVocab::load(in.at("vocab").get<std::string>());
    inputs.seed = {in.at("seed_checkpoint").get<std::string>(), in.value("seed_lexicon", std::string()),
                   in.value("seed_lm", std::string())};
    if (in.contains("modular_am")) inputs.modular_am = modular::ModularAMConfig::from_json(in["modular_am"]);
    if (in.contains("seq2seq")) inputs.seq2seq = s2s::Seq2SeqConfig::from_json(in["seq2seq"]);
    if (in.contains("neural_lm")) inputs.neural_lm = text::NeuralLMConfig::from_json(in["neural_lm"]);
    inputs.ngram_discount = in.value("ngram_discount", inputs.ngram_discount);
    auto r = sst::run_sst(plan, inputs, sst_out);
    std::cout << "model " << r.model.string() << "\nreport " << r.report.string() << "\n";
  });
  auto* sst_pt = sst_cmd->add_subcommand("pseudotranscribe", "Decode the unlabeled splits with a seed model");
  sst_pt->add_option("--corpus", sst_corpus)->required();
  sst_pt->add_option("--seed-model", sst_seed_model, "S0 (seq2seq) or H0/H1/H2 (modular)");
  sst_pt->add_option("--checkpoint", sst_ckpt)->required();
  sst_pt->add_option("--lexicon", sst_lexicon, "Modular seeds");
  sst_pt->add_option("--lm", sst_lm, "Modular seeds (ARPA)");
  sst_pt->add_option("--beam", sst_beam);
  sst_pt->add_option("--out", sst_out)->required();
  sst_pt->callback([&] {
    auto c = corpus::read_corpus(sst_corpus);
    auto utts = utterances(c, "unlabeled");
    auto seed = sst::seed_model_from_string(sst_seed_model);
    sst::TranscriptManifest m;
    if (sst::is_seq2seq(seed)) {
      auto model = s2s::Seq2SeqModel::load(sst_ckpt);
      s2s::Seq2SeqDecodeConfig cfg;
      if (sst_beam > 0) cfg.beam = sst_beam;
      m = sst::pseudotranscribe(sst::Seq2SeqSeed{&model, cfg, sst_seed_model}, utts);
    } else {
      if (sst_lexicon.empty() || sst_lm.empty()) throw Error("modular seeds need --lexicon and --lm");
      auto am = modular::ModularAM::load(sst_ckpt);
      auto lex = text::Lexicon::load(sst_lexicon, text::LexiconTier::Expanded);
      auto lm = text::NGramLM::load_arpa(sst_lm);
      modular::ModularDecodeConfig cfg;
      if (sst_beam > 0) cfg.beam = sst_beam;
      m = sst::pseudotranscribe(sst::ModularSeed{&am, &lex, &lm, cfg, sst_seed_model}, utts);
    }
    m.save(sst_out);
    std::cout << m.entries.size() << " pseudotranscripts\n";
  });
  auto* sst_merge = sst_cmd->add_subcommand("merge", "Supervised split plus pseudotranscripts");
  sst_merge->add_option("--corpus", sst_corpus)->required();
  sst_merge->add_option("--pseudo", sst_pseudo)->required();
  sst_merge->add_option("--min-score", sst_min_score, "Keep pseudotranscripts with score per frame >= this");
  sst_merge->add_option("--out", sst_out)->required();
  sst_merge->callback([&] {
    auto c = corpus::read_corpus(sst_corpus);
    auto pseudo = sst::TranscriptManifest::load(sst_pseudo);
    const bool filter = !std::isnan(sst_min_score);
    auto merged = sst::merge_training_set(utterances(c, "sup_cts"), pseudo, !filter,
                                          filter ? std::optional<double>(sst_min_score) : std::nullopt);
    write_file_atomic(sst_out, merged.serialize());
    std::cout << merged.size() << " training entries\n";
  });

  // score
  auto* score_cmd = app.add_subcommand("score", "Scoring")->require_subcommand(1);
  std::string score_ref, score_hyp;
  auto* score_wer = score_cmd->add_subcommand("wer", "WER per eval subset and their mean");
  score_wer->add_option("--ref", score_ref, "Corpus directory or manifest.jsonl")->required();
  score_wer->add_option("--hyp", score_hyp, "Hypothesis manifest from decode")->required();
  score_wer->callback([&] {
    auto hyps_manifest = sst::TranscriptManifest::load(score_hyp);
    std::map<std::string, WordSeq> hyps;
    for (const auto& [id, e] : hyps_manifest.entries) hyps[id] = e.words;
    std::vector<corpus::Utterance> refs;
    for (auto& u : reference_manifest(score_ref))
      if (hyps.count(u.utt_id)) refs.push_back(std::move(u));
    if (refs.empty()) throw Error("no reference transcript matches a hypothesis");
    print_score(eval::score_eval(hyps, refs));
  });

  // exp
  auto* exp_cmd = app.add_subcommand("exp", "Experiment matrix")->require_subcommand(1);
  std::string exp_matrix, exp_out, exp_cache;
  int exp_status = 0;
  auto* exp_run = exp_cmd->add_subcommand("run", "Train, decode and score every condition");
  exp_run->add_option("--matrix", exp_matrix, "Matrix JSON (default: built-in benchmark)");
  exp_run->add_option("--out", exp_out)->required();
  exp_run->add_option("--cache", exp_cache, "Artifact cache (default: <out>/cache)");
  exp_run->callback([&] {
    auto cfg = exp_matrix.empty() ? eval::MatrixConfig::default_matrix() : eval::MatrixConfig::load(exp_matrix);
    eval::MatrixOptions opt;
    opt.cache_dir = exp_cache;
    opt.log = &std::cerr;
    auto result = eval::run_experiment_matrix(cfg, exp_out, opt);
    for (const auto& t : result.tables) std::cout << "## " << t.name << "\n\n" << eval::to_markdown(t) << "\n";
    for (const auto& o : result.orderings) std::cout << o.describe() << "\n";
    if (!result.all_evaluable()) {
      std::cerr << "some orderings could not be evaluated\n";
      exp_status = 2;
    }
  });
  auto* exp_default = exp_cmd->add_subcommand("default-matrix", "Print the built-in matrix configuration");
  exp_default->callback([] { std::cout << eval::MatrixConfig::default_matrix().to_json().dump(2) << "\n"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exp_status;
}
