#include "cdasr/eval/matrix.hpp"

#include "cdasr/hash.hpp"
#include "cdasr/s2s/decoder.hpp"
#include "cdasr/text/subword.hpp"

#include <chrono>
#include <memory>
#include <ostream>
#include <regex>
#include <set>

namespace cdasr::eval {

namespace {

const std::vector<std::string> kSupervisedRows{"H0", "H0+lex", "H1", "H2", "S0", "S0+extLM", "S1", "S2"};

// Text sets behind LM level 0, 1 and 2.
const std::array<std::vector<std::string>, 3> kLevelSets{{{}, {"set1"}, {"set1", "set2"}}};

struct RowPlan {
  bool sst = false;
  std::string supervised;  // one of kSupervisedRows
  sst::SeedModel seed = sst::SeedModel::H1;
  sst::Paradigm target = sst::Paradigm::Seq2Seq;
  std::string variant;  // "", "ext", "lex", "set1", "set2"

  // LM level used for decoding, or -1 for none.
  int lm_level() const {
    if (variant == "set1") return 1;
    if (variant == "set2") return 2;
    if (variant == "ext" || variant == "lex") return 0;
    return target == sst::Paradigm::Modular ? 0 : -1;
  }
};

RowPlan parse_row(const std::string& label) {
  RowPlan p;
  if (std::find(kSupervisedRows.begin(), kSupervisedRows.end(), label) != kSupervisedRows.end()) {
    p.supervised = label;
    return p;
  }
  static const std::regex re(R"(^(S0|H0|H1|H2) (s2s|hyb) SST( \+ (ext LM|lex\. expand|Set 1 LM|Set 2 LM))?$)");
  std::smatch m;
  if (!std::regex_match(label, m, re)) throw Error("unknown matrix row '" + label + "'");
  p.sst = true;
  p.seed = sst::seed_model_from_string(m[1]);
  p.target = m[2] == "s2s" ? sst::Paradigm::Seq2Seq : sst::Paradigm::Modular;
  const std::string v = m[4];
  p.variant = v.empty() ? "" : v == "ext LM" ? "ext" : v == "lex. expand" ? "lex" : v == "Set 1 LM" ? "set1" : "set2";
  if (p.variant == "ext" && p.target == sst::Paradigm::Modular)
    throw Error("matrix row '" + label + "': the modular target always decodes with an LM; use '+ lex. expand'");
  if (p.variant == "lex" && p.target == sst::Paradigm::Seq2Seq)
    throw Error("matrix row '" + label + "': a seq2seq model has no lexicon to expand");
  return p;
}

using SSTKey = std::pair<sst::SeedModel, sst::Paradigm>;

// LM levels each self-training run must produce for the requested rows.
std::map<SSTKey, std::set<int>> required_sst_levels(const MatrixConfig& cfg) {
  std::map<SSTKey, std::set<int>> out;
  for (const auto& t : cfg.tables)
    for (const auto& label : t.rows) {
      auto p = parse_row(label);
      if (!p.sst) continue;
      auto& levels = out[{p.seed, p.target}];
      if (p.lm_level() >= 0) levels.insert(p.lm_level());
    }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hash_of(std::initializer_list<std::string> fields) {
  ContentHasher h;
  for (const auto& f : fields) h.add(f);
  return h.hex();
}

struct Asset {
  std::string key;
  fs::path path;
};

class LanguageRun {
 public:
  LanguageRun(const MatrixConfig& cfg, const LanguageCondition& lang, fs::path cache, std::ostream* log,
              std::map<SSTKey, std::set<int>> sst_levels)
      : cfg_(cfg), lang_(lang), cache_(std::move(cache)), log_(log), sst_levels_(std::move(sst_levels)) {}

  Cell cell(const RowPlan& row) {
    load_corpus();
    if (!row.sst) return supervised_cell(row.supervised);
    return row.target == sst::Paradigm::Seq2Seq ? sst_s2s_cell(row) : sst_modular_cell(row);
  }

  json details = json::object();
  json timings = json::object();

 private:
  // Returns the cache directory for `key`, building it with `build(dir)` when absent or incomplete.
  template <typename Build>
  fs::path cached(const std::string& kind, const std::string& key, Build&& build) {
    const std::string id = kind + "-" + key.substr(0, 20);
    if (auto f = failures_.find(id); f != failures_.end()) throw Error(f->second);
    fs::path dir = cache_ / id;
    if (fs::exists(dir / ".complete")) return dir;
    fs::create_directories(dir);
    note("building " + id);
    auto t0 = std::chrono::steady_clock::now();
    try {
      build(dir);
    } catch (const std::exception& e) {
      failures_[id] = kind + " failed: " + e.what();
      note(failures_[id]);
      throw Error(failures_[id]);
    }
    timings[id] = seconds_since(t0);
    write_file_atomic(dir / ".complete", key + "\n");
    return dir;
  }

  void note(const std::string& msg) const {
    if (log_) *log_ << "[" << lang_.name << "] " << msg << std::endl;
  }

  void load_corpus() {
    if (corpus_) return;
    spec_ = corpus::build_language_spec(cfg_.generator, lang_.seed);
    const uint64_t corpus_seed = corpus::mix_seed(cfg_.corpus_seed, lang_.seed);
    corpus_key_ = hash_of({"corpus", cfg_.generator.to_json().dump(), std::to_string(lang_.seed),
                           cfg_.split_plan.to_json().dump(), std::to_string(corpus_seed)});
    std::unique_ptr<corpus::CorpusManifest> made;
    auto dir = cached("corpus", corpus_key_, [&](const fs::path& d) {
      made = std::make_unique<corpus::CorpusManifest>(corpus::synth_corpus(spec_, cfg_.split_plan, corpus_seed));
      corpus::write_corpus(*made, d / "corpus");
    });
    corpus_ = made ? std::move(made) : std::make_unique<corpus::CorpusManifest>(corpus::read_corpus(dir / "corpus"));
    for (const auto& u : corpus_->split(corpus::Split::SupCts)) sup_.push_back(&u);
    sup_text_ = corpus::transcripts_of(corpus_->split(corpus::Split::SupCts));

    vocab_key_ = hash_of({"vocab", corpus_key_, std::to_string(cfg_.subword_units)});
    auto vdir = cached("vocab", vocab_key_, [&](const fs::path& d) {
      text::train_subwords(sup_text_, cfg_.subword_units, spec_.graphemes).save(d / "vocab.json");
    });
    vocab_ = text::SubwordVocab::load(vdir / "vocab.json");

    auto tdir = cached("text", hash_of({"text", corpus_key_}), [&](const fs::path& d) {
      text::build_lexicon({sup_text_}, text::LexiconTier::Base).save(d / "lexicon_base.txt");
      text::build_lexicon({sup_text_, spec_.words}, text::LexiconTier::Expanded).save(d / "lexicon_expanded.txt");
    });
    lexicon_base_ = {hash_of({corpus_key_, "lexicon_base"}), tdir / "lexicon_base.txt"};
    lexicon_expanded_ = {hash_of({corpus_key_, "lexicon_expanded"}), tdir / "lexicon_expanded.txt"};
  }

  std::vector<const std::vector<std::string>*> level_texts(int level) const {
    std::vector<const std::vector<std::string>*> out{&sup_text_};
    for (const auto& name : kLevelSets.at(level)) out.push_back(&corpus_->text_sets.at(name));
    return out;
  }

  Asset ngram(int level) {
    const std::string key = hash_of({"ngram", corpus_key_, std::to_string(level), std::to_string(cfg_.ngram_discount)});
    auto dir = cached("ngram", key, [&](const fs::path& d) {
      std::vector<text::WeightedText> texts;
      for (const auto* t : level_texts(level)) texts.push_back({t, 1});
      text::train_ngram(texts, cfg_.ngram_discount).save_arpa(d / "lm.arpa");
    });
    return {key, dir / "lm.arpa"};
  }

  Asset neural_lm(int level) {
    const std::string key = hash_of({"nlm", corpus_key_, vocab_key_, std::to_string(level), cfg_.neural_lm.to_json().dump()});
    auto dir = cached("nlm", key, [&](const fs::path& d) {
      std::vector<std::vector<int>> seqs;
      for (const auto* t : level_texts(level))
        for (const auto& s : *t) seqs.push_back(text::encode(vocab_, s));
      text::NeuralLMTrainReport rep;
      text::train_neural_lm(seqs, vocab_, cfg_.neural_lm, {}, &rep).save(d / "lm.ckpt");
    });
    return {key, dir / "lm.ckpt"};
  }

  Asset modular_am() {
    const std::string key = hash_of({"modular_am", corpus_key_, spec_.graphemes, cfg_.modular_am.to_json().dump()});
    auto dir = cached("am", key, [&](const fs::path& d) {
      modular::ModularTrainReport rep;
      modular::train_modular_am(sup_, modular::Alphabet(spec_.graphemes), cfg_.modular_am, {}, &rep).save(d / "model.ckpt");
      write_file_atomic(d / "report.json", json{{"skipped", rep.skipped}, {"epoch_losses", rep.epoch_losses}}.dump(2));
    });
    return {key, dir / "model.ckpt"};
  }

  Asset seq2seq() {
    const std::string key = hash_of({"seq2seq", corpus_key_, vocab_key_, cfg_.seq2seq.to_json().dump()});
    auto dir = cached("s2s", key, [&](const fs::path& d) {
      auto [train, val] = s2s::split_validation(sup_, cfg_.seq2seq.validation_fraction, cfg_.seq2seq.seed);
      s2s::Seq2SeqTrainReport rep;
      s2s::train_seq2seq(train, val, vocab_, cfg_.seq2seq, &rep).save(d / "model.ckpt");
      write_file_atomic(d / "report.json", json{{"best_epoch", rep.best_epoch},
                                               {"best_validation_wer", rep.best_validation_wer},
                                               {"validation_wers", rep.validation_wers},
                                               {"epoch_losses", rep.epoch_losses}}
                                              .dump(2));
    });
    details["S0"]["training"] = read_json(dir / "report.json");
    return {key, dir / "model.ckpt"};
  }

  struct SSTAssets {
    std::string key;
    sst::SSTResult result;
    std::map<int, size_t> lm_index;  // level -> position in result.lms
  };

  SSTAssets self_train(sst::SeedModel seed_model, sst::Paradigm target) {
    sst::SSTPlan plan;
    plan.seed_model = seed_model;
    plan.target = target;
    plan.seed = cfg_.sst_seed;
    plan.lm_assets.clear();
    std::map<int, size_t> lm_index;
    for (int level : sst_levels_[{seed_model, target}]) {
      lm_index[level] = plan.lm_assets.size();
      plan.lm_assets.push_back(kLevelSets.at(level));
    }

    sst::SSTInputs in;
    in.corpus = corpus_.get();
    in.external_words = spec_.words;
    in.vocab = vocab_;
    in.graphemes = spec_.graphemes;
    in.modular_am = cfg_.modular_am;
    in.seq2seq = cfg_.seq2seq;
    in.neural_lm = cfg_.neural_lm;
    in.ngram_discount = cfg_.ngram_discount;
    std::string seed_key;
    if (seed_model == sst::SeedModel::S0) {
      auto m = seq2seq();
      in.seed = {m.path, {}, {}};
      plan.decode = {{"beam", cfg_.s2s_beam}};
      seed_key = m.key;
    } else {
      auto am = modular_am();
      const int level = seed_model == sst::SeedModel::H2 ? 2 : seed_model == sst::SeedModel::H1 ? 1 : 0;
      auto lex = seed_model == sst::SeedModel::H0 ? lexicon_base_ : lexicon_expanded_;
      auto lm = ngram(level);
      in.seed = {am.path, lex.path, lm.path};
      plan.decode = cfg_.modular_decode.to_json();
      seed_key = hash_of({am.key, lex.key, lm.key});
    }
    plan.validate();

    json configs = {{"modular_am", in.modular_am.to_json()},
                    {"seq2seq", in.seq2seq.to_json()},
                    {"neural_lm", in.neural_lm.to_json()},
                    {"discount", in.ngram_discount}};
    const std::string key = hash_of({"sst", plan.hash(), seed_key, corpus_key_, vocab_key_, configs.dump()});
    const std::string label = sst::to_string(seed_model) + " " + (target == sst::Paradigm::Seq2Seq ? "s2s" : "hyb");
    sst::SSTResult result;
    auto dir = cached("sst", key, [&](const fs::path& d) { result = sst::run_sst(plan, in, d / "run"); });
    if (result.model.empty()) result = sst::run_sst(plan, in, dir / "run");  // all stages are reused
    auto report = read_json(result.report);
    details["SST " + label] = {{"pseudotranscripts", report.at("pseudotranscripts")},
                               {"merged", report.at("merged")},
                               {"training", report.at("training")}};
    return {key, result, lm_index};
  }

  Cell decode_modular(const Asset& am_asset, const Asset& lexicon, text::LexiconTier tier, const Asset& lm) {
    const std::string key = hash_of({"decode_modular", am_asset.key, lexicon.key, lm.key,
                                     cfg_.modular_decode.to_json().dump(), corpus_key_});
    auto dir = cached("dec", key, [&](const fs::path& d) {
      auto& lps = eval_log_posteriors(am_asset);
      auto lex = text::Lexicon::load(lexicon.path, tier);
      auto ngram_lm = text::NGramLM::load_arpa(lm.path);
      modular::ModularDecoder decoder(lex, ngram_lm, modular_ams_.at(am_asset.key)->alphabet(), cfg_.modular_decode);
      const auto& eval = corpus_->split(corpus::Split::EvalBn);
      std::map<std::string, WordSeq> hyps;
      for (size_t k = 0; k < eval.size(); ++k) hyps[eval[k].utt_id] = decoder.decode(lps[k]).words;
      save_score(d, score_eval(hyps, eval), hyps);
    });
    return load_cell(dir);
  }

  std::vector<MatrixXd>& eval_log_posteriors(const Asset& am_asset) {
    auto it = eval_lps_.find(am_asset.key);
    if (it != eval_lps_.end()) return it->second;
    auto am = std::make_shared<modular::ModularAM>(modular::ModularAM::load(am_asset.path));
    modular_ams_[am_asset.key] = am;
    std::vector<MatrixXd> out;
    const auto& eval = corpus_->split(corpus::Split::EvalBn);
    for (size_t s = 0; s < eval.size(); s += 32) {
      std::vector<const FeatureMatrix*> feats;
      for (size_t k = s; k < std::min(eval.size(), s + 32); ++k) feats.push_back(&eval[k].features);
      for (auto& lp : am->log_posteriors(feats)) out.push_back(std::move(lp));
    }
    return eval_lps_[am_asset.key] = std::move(out);
  }

  const s2s::Seq2SeqModel& load_s2s(const Asset& a) {
    auto& slot = s2s_models_[a.key];
    if (!slot) slot = std::make_shared<s2s::Seq2SeqModel>(s2s::Seq2SeqModel::load(a.path));
    return *slot;
  }

  const text::NeuralLM& load_nlm(const Asset& a) {
    auto& slot = nlms_[a.key];
    if (!slot) slot = std::make_shared<text::NeuralLM>(text::NeuralLM::load(a.path));
    return *slot;
  }

  static std::vector<WordSeq> decode_s2s_all(const s2s::Seq2SeqModel& model,
                                             const std::vector<const corpus::Utterance*>& utts,
                                             const s2s::Seq2SeqDecodeConfig& dc) {
    std::vector<WordSeq> out;
    for (size_t s = 0; s < utts.size(); s += 32) {
      std::vector<const FeatureMatrix*> feats;
      for (size_t k = s; k < std::min(utts.size(), s + 32); ++k) feats.push_back(&utts[k]->features);
      for (auto& h : s2s::s2s_decode_batch(model, feats, dc)) out.push_back(std::move(h.words));
    }
    return out;
  }

  // Fusion weight with the lowest WER on the model's CTS validation split; ties go to the smaller weight.
  double tune_fusion(const Asset& model_asset, const Asset& lm_asset, uint64_t split_seed, const std::string& label) {
    auto [train, dev] = s2s::split_validation(sup_, cfg_.seq2seq.validation_fraction, split_seed);
    json grid = cfg_.fusion_weights;
    const std::string key = hash_of({"fusion", model_asset.key, lm_asset.key, std::to_string(split_seed), grid.dump(),
                                     std::to_string(cfg_.s2s_beam)});
    auto dir = cached("fus", key, [&](const fs::path& d) {
      const auto& model = load_s2s(model_asset);
      const auto& lm = load_nlm(lm_asset);
      json sweep = json::array();
      double best_w = cfg_.fusion_weights.front(), best = std::numeric_limits<double>::infinity();
      for (double w : cfg_.fusion_weights) {
        s2s::Seq2SeqDecodeConfig dc;
        dc.beam = cfg_.s2s_beam;
        dc.fusion = s2s::Fusion{&lm, w};
        auto hyps = decode_s2s_all(model, dev, dc);
        WERBreakdown total;
        for (size_t k = 0; k < dev.size(); ++k) total += wer(*dev[k]->transcript, hyps[k]);
        sweep.push_back({{"weight", w}, {"wer", total.wer_percent()}});
        if (total.wer_percent() < best) {
          best = total.wer_percent();
          best_w = w;
        }
      }
      write_file_atomic(d / "fusion.json", json{{"weight", best_w}, {"sweep", sweep}}.dump(2));
    });
    auto j = read_json(dir / "fusion.json");
    details["fusion"][label] = j;
    return j.at("weight").get<double>();
  }

  Cell decode_s2s(const Asset& model_asset, const std::optional<Asset>& lm_asset, uint64_t split_seed,
                  const std::string& label) {
    double weight = lm_asset ? tune_fusion(model_asset, *lm_asset, split_seed, label) : 0.0;
    const std::string key = hash_of({"decode_s2s", model_asset.key, lm_asset ? lm_asset->key : "none",
                                     std::to_string(weight), std::to_string(cfg_.s2s_beam), corpus_key_});
    auto dir = cached("dec", key, [&](const fs::path& d) {
      const auto& model = load_s2s(model_asset);
      s2s::Seq2SeqDecodeConfig dc;
      dc.beam = cfg_.s2s_beam;
      if (lm_asset) dc.fusion = s2s::Fusion{&load_nlm(*lm_asset), weight};
      const auto& eval = corpus_->split(corpus::Split::EvalBn);
      std::vector<const corpus::Utterance*> utts;
      for (const auto& u : eval) utts.push_back(&u);
      auto words = decode_s2s_all(model, utts, dc);
      std::map<std::string, WordSeq> hyps;
      for (size_t k = 0; k < eval.size(); ++k) hyps[eval[k].utt_id] = std::move(words[k]);
      save_score(d, score_eval(hyps, eval), hyps);
    });
    return load_cell(dir);
  }

  static void save_score(const fs::path& d, const EvalScore& score, const std::map<std::string, WordSeq>& hyps) {
    json subsets = json::object();
    for (const auto& [s, b] : score.subsets)
      subsets[corpus::to_string(s)] = {{"S", b.substitutions}, {"D", b.deletions}, {"I", b.insertions}, {"N", b.ref_len}};
    std::string lines;
    for (const auto& [id, w] : hyps) lines += id + "\t" + join_words(w) + "\n";
    write_file_atomic(d / "hypotheses.tsv", lines);
    write_file_atomic(d / "score.json", json{{"subsets", subsets}}.dump(2));
  }

  static Cell load_cell(const fs::path& d) {
    auto j = read_json(d / "score.json");
    EvalScore score;
    double sum = 0;
    for (const auto& [name, b] : j.at("subsets").items()) {
      WERBreakdown w;
      w.substitutions = b.at("S");
      w.deletions = b.at("D");
      w.insertions = b.at("I");
      w.ref_len = b.at("N");
      score.subsets[corpus::eval_subset_from_string(name)] = w;
      sum += w.wer_percent();
    }
    if (score.subsets.empty()) throw Error("decode result without subsets in " + d.string());
    score.average = sum / double(score.subsets.size());
    return Cell::from_score(score);
  }

  Cell supervised_cell(const std::string& row) {
    if (row[0] == 'H') {
      auto am = modular_am();
      if (row == "H0") return decode_modular(am, lexicon_base_, text::LexiconTier::Base, ngram(0));
      if (row == "H0+lex") return decode_modular(am, lexicon_expanded_, text::LexiconTier::Expanded, ngram(0));
      return decode_modular(am, lexicon_expanded_, text::LexiconTier::Expanded, ngram(row == "H1" ? 1 : 2));
    }
    auto model = seq2seq();
    if (row == "S0") return decode_s2s(model, std::nullopt, cfg_.seq2seq.seed, row);
    const int level = row == "S0+extLM" ? 0 : row == "S1" ? 1 : 2;
    return decode_s2s(model, neural_lm(level), cfg_.seq2seq.seed, row);
  }

  Asset sst_lm(const SSTAssets& s, int level) {
    return {hash_of({s.key, "lm", std::to_string(level)}), s.result.lms.at(s.lm_index.at(level))};
  }

  Cell sst_s2s_cell(const RowPlan& row) {
    auto s = self_train(row.seed, row.target);
    Asset model{hash_of({s.key, "model"}), s.result.model};
    const std::string label = sst::to_string(row.seed) + " s2s SST " + row.variant;
    if (row.lm_level() < 0) return decode_s2s(model, std::nullopt, cfg_.sst_seed, label);
    return decode_s2s(model, sst_lm(s, row.lm_level()), cfg_.sst_seed, label);
  }

  Cell sst_modular_cell(const RowPlan& row) {
    auto s = self_train(row.seed, row.target);
    Asset am{hash_of({s.key, "model"}), s.result.model};
    if (row.variant.empty())
      return decode_modular(am, {hash_of({s.key, "semisup"}), s.result.semisup_lexicon}, text::LexiconTier::Semisup,
                            sst_lm(s, 0));
    return decode_modular(am, {hash_of({s.key, "expanded"}), s.result.expanded_lexicon}, text::LexiconTier::Expanded,
                          sst_lm(s, row.lm_level()));
  }

  const MatrixConfig& cfg_;
  LanguageCondition lang_;
  fs::path cache_;
  std::ostream* log_;
  std::map<SSTKey, std::set<int>> sst_levels_;
  std::map<std::string, std::string> failures_;

  corpus::LanguageSpec spec_;
  std::unique_ptr<corpus::CorpusManifest> corpus_;
  std::string corpus_key_, vocab_key_;
  std::vector<const corpus::Utterance*> sup_;
  std::vector<std::string> sup_text_;
  text::SubwordVocab vocab_;
  Asset lexicon_base_, lexicon_expanded_;
  std::map<std::string, std::vector<MatrixXd>> eval_lps_;
  std::map<std::string, std::shared_ptr<modular::ModularAM>> modular_ams_;
  std::map<std::string, std::shared_ptr<s2s::Seq2SeqModel>> s2s_models_;
  std::map<std::string, std::shared_ptr<text::NeuralLM>> nlms_;
};

json ordering_to_json(const OrderingSpec& o) {
  return {{"name", o.name}, {"left", o.left}, {"op", o.op}, {"right", o.right}};
}

std::string side_text(const std::vector<std::string>& side) {
  return side.size() == 1 ? side[0] : "(" + side[0] + " - " + side[1] + ")";
}

}  // namespace

std::string OrderingSpec::describe() const { return side_text(left) + " " + op + " " + side_text(right); }

bool OrderingResult::holds() const {
  if (!evaluable()) return false;
  return spec.op == "<" ? *left < *right : *left > *right;
}

std::string OrderingResult::describe() const {
  std::string out = spec.name + ": " + spec.describe() + " | ";
  out += (left ? format_wer(*left) : std::string("n/a")) + " " + spec.op + " " +
         (right ? format_wer(*right) : std::string("n/a")) + " | ";
  return out + (!evaluable() ? "UNEVALUABLE" : holds() ? "PASS" : "FAIL");
}

std::optional<double> MatrixResult::average(const std::string& row) const {
  for (const auto& t : tables)
    if (auto r = t.row_index(row)) return t.average(*r);
  return std::nullopt;
}

bool MatrixResult::all_evaluable() const {
  return std::all_of(orderings.begin(), orderings.end(), [](const auto& o) { return o.evaluable(); });
}

bool MatrixResult::all_hold() const {
  return std::all_of(orderings.begin(), orderings.end(), [](const auto& o) { return o.holds(); });
}

void MatrixConfig::validate() const {
  if (languages.empty()) throw Error("matrix: at least one language is required");
  std::set<std::string> names;
  for (const auto& l : languages)
    if (l.name.empty() || l.name == kAvgColumn || !names.insert(l.name).second)
      throw Error("matrix: language names must be unique, non-empty and not '" + kAvgColumn + "'");
  if (tables.empty()) throw Error("matrix: at least one table is required");
  std::set<std::string> labels, table_names;
  for (const auto& t : tables) {
    if (t.name.empty() || t.name.find('/') != std::string::npos || !table_names.insert(t.name).second)
      throw Error("matrix: table names must be unique file names");
    if (t.rows.empty()) throw Error("matrix: table '" + t.name + "' has no rows");
    for (const auto& r : t.rows) {
      parse_row(r);
      if (!labels.insert(r).second) throw Error("matrix: row '" + r + "' appears twice");
    }
  }
  for (const auto& o : orderings) {
    if (o.op != "<" && o.op != ">") throw Error("matrix: ordering '" + o.name + "' needs op '<' or '>'");
    for (const auto* side : {&o.left, &o.right}) {
      if (side->empty() || side->size() > 2)
        throw Error("matrix: ordering '" + o.name + "' sides take one row or a difference of two");
      for (const auto& r : *side)
        if (!labels.count(r)) throw Error("matrix: ordering '" + o.name + "' refers to absent row '" + r + "'");
    }
  }
  if (fusion_weights.empty()) throw Error("matrix: the fusion weight grid is empty");
  if (s2s_beam < 1) throw Error("matrix: s2s beam must be at least 1");
}

MatrixConfig MatrixConfig::from_json(const json& j) {
  MatrixConfig c;
  for (const auto& l : j.at("languages")) c.languages.push_back({l.at("name"), l.at("seed")});
  if (j.contains("generator")) c.generator = corpus::GeneratorConfig::from_json(j.at("generator"));
  if (j.contains("split_plan")) c.split_plan = corpus::SplitPlan::from_json(j.at("split_plan"));
  c.corpus_seed = j.value("corpus_seed", c.corpus_seed);
  c.subword_units = j.value("subword_units", c.subword_units);
  c.ngram_discount = j.value("ngram_discount", c.ngram_discount);
  if (j.contains("modular_am")) c.modular_am = modular::ModularAMConfig::from_json(j.at("modular_am"));
  if (j.contains("modular_decode")) c.modular_decode = modular::ModularDecodeConfig::from_json(j.at("modular_decode"));
  if (j.contains("seq2seq")) c.seq2seq = s2s::Seq2SeqConfig::from_json(j.at("seq2seq"));
  c.s2s_beam = j.value("s2s_beam", c.s2s_beam);
  if (j.contains("neural_lm")) c.neural_lm = text::NeuralLMConfig::from_json(j.at("neural_lm"));
  c.fusion_weights = j.value("fusion_weights", c.fusion_weights);
  c.sst_seed = j.value("sst_seed", c.sst_seed);
  for (const auto& t : j.at("tables")) c.tables.push_back({t.at("name"), t.at("rows")});
  if (j.contains("orderings"))
    for (const auto& o : j.at("orderings")) c.orderings.push_back({o.at("name"), o.at("left"), o.at("op"), o.at("right")});
  c.validate();
  return c;
}

json MatrixConfig::to_json() const {
  json langs = json::array(), tabs = json::array(), ords = json::array();
  for (const auto& l : languages) langs.push_back({{"name", l.name}, {"seed", l.seed}});
  for (const auto& t : tables) tabs.push_back({{"name", t.name}, {"rows", t.rows}});
  for (const auto& o : orderings) ords.push_back(ordering_to_json(o));
  return {{"languages", langs},
          {"generator", generator.to_json()},
          {"split_plan", split_plan.to_json()},
          {"corpus_seed", corpus_seed},
          {"subword_units", subword_units},
          {"ngram_discount", ngram_discount},
          {"modular_am", modular_am.to_json()},
          {"modular_decode", modular_decode.to_json()},
          {"seq2seq", seq2seq.to_json()},
          {"s2s_beam", s2s_beam},
          {"neural_lm", neural_lm.to_json()},
          {"fusion_weights", fusion_weights},
          {"sst_seed", sst_seed},
          {"tables", tabs},
          {"orderings", ords}};
}

MatrixConfig MatrixConfig::default_matrix() {
  MatrixConfig c;
  c.languages = {{"L1", 17}, {"L2", 29}, {"L3", 43}};
  c.tables = {{"supervised", kSupervisedRows},
              {"semisupervised",
               {"S0 s2s SST", "H1 s2s SST", "H1 s2s SST + ext LM", "H1 s2s SST + Set 1 LM", "H1 s2s SST + Set 2 LM",
                "H2 s2s SST", "H2 s2s SST + ext LM", "H2 s2s SST + Set 2 LM", "H1 hyb SST", "H1 hyb SST + lex. expand",
                "H1 hyb SST + Set 1 LM", "H1 hyb SST + Set 2 LM", "H2 hyb SST", "H2 hyb SST + lex. expand",
                "H2 hyb SST + Set 2 LM"}}};
  c.orderings = {
      {"seq2seq baseline trails hybrid baseline", {"S0"}, ">", {"H0"}},
      {"Set 2 LM improves on Set 1 LM", {"H2"}, "<", {"H1"}},
      {"Set 1 LM improves on lexicon expansion", {"H1"}, "<", {"H0+lex"}},
      {"lexicon expansion improves on hybrid baseline", {"H0+lex"}, "<", {"H0"}},
      {"LM data helps seq2seq less than hybrid", {"S0", "S2"}, "<", {"H0", "H2"}},
      {"self-training improves seq2seq baseline", {"S0 s2s SST"}, "<", {"S0"}},
      {"H2 seed beats H1 seed", {"H2 s2s SST"}, "<", {"H1 s2s SST"}},
      {"H1 seed beats S0 seed", {"H1 s2s SST"}, "<", {"S0 s2s SST"}},
      {"hybrid SST with full LM beats seq2seq SST with fusion", {"H2 hyb SST + Set 2 LM"}, "<",
       {"H2 s2s SST + Set 2 LM"}},
  };
  return c;
}

std::vector<OrderingResult> evaluate_orderings(const std::vector<OrderingSpec>& specs,
                                               const std::vector<ResultTable>& tables) {
  MatrixResult lookup;
  lookup.tables = tables;
  auto side_value = [&](const std::vector<std::string>& side) -> std::optional<double> {
    std::vector<double> v;
    for (const auto& r : side) {
      auto a = lookup.average(r);
      if (!a) return std::nullopt;
      v.push_back(*a);
    }
    return v.size() == 1 ? v[0] : round1(v[0] - v[1]);
  };
  std::vector<OrderingResult> out;
  for (const auto& s : specs) out.push_back({s, side_value(s.left), side_value(s.right)});
  return out;
}

std::string orderings_markdown(const std::vector<OrderingResult>& results) {
  std::string out = "| Ordering | Check | Left | Right | Result |\n|---|---|---:|---:|---|\n";
  for (const auto& r : results) {
    out += "| " + r.spec.name + " | " + r.spec.describe() + " | " + (r.left ? format_wer(*r.left) : "—") + " | " +
           (r.right ? format_wer(*r.right) : "—") + " | " +
           (!r.evaluable() ? "unevaluable" : r.holds() ? "pass" : "fail") + " |\n";
  }
  return out;
}

MatrixResult run_experiment_matrix(const MatrixConfig& cfg, const fs::path& out_dir, const MatrixOptions& options) {
  cfg.validate();
  fs::create_directories(out_dir);
  const fs::path cache = options.cache_dir.empty() ? out_dir / "cache" : options.cache_dir;
  fs::create_directories(cache);
  const auto levels = required_sst_levels(cfg);

  std::vector<std::string> columns;
  for (const auto& l : cfg.languages) columns.push_back(l.name);
  MatrixResult result;
  for (const auto& t : cfg.tables) result.tables.emplace_back(t.name, columns, t.rows);

  json timings = json::object();
  result.details = json::object();
  for (size_t c = 0; c < cfg.languages.size(); ++c) {
    const auto t0 = std::chrono::steady_clock::now();
    LanguageRun run(cfg, cfg.languages[c], cache, options.log, levels);
    for (auto& table : result.tables) {
      for (size_t r = 0; r < table.rows.size(); ++r) {
        try {
          table.at(r, c) = run.cell(parse_row(table.rows[r]));
        } catch (const std::exception& e) {
          table.at(r, c) = Cell::failed(e.what());
        }
        if (options.log) {
          const auto& cell = table.at(r, c);
          *options.log << "[" << cfg.languages[c].name << "] " << table.rows[r] << ": "
                       << (cell.ok() ? format_wer(*cell.wer) : "failed (" + cell.error + ")") << std::endl;
        }
      }
    }
    json errors = json::object();
    for (const auto& table : result.tables)
      for (size_t r = 0; r < table.rows.size(); ++r)
        if (!table.at(r, c).ok()) errors[table.rows[r]] = table.at(r, c).error;
    run.details["errors"] = errors;
    result.details[cfg.languages[c].name] = run.details;
    timings[cfg.languages[c].name] = {{"total_seconds", seconds_since(t0)}, {"builds", run.timings}};
  }

  result.orderings = evaluate_orderings(cfg.orderings, result.tables);
  for (const auto& t : result.tables) emit_report(t, out_dir);
  write_file_atomic(out_dir / "orderings.md", orderings_markdown(result.orderings));
  write_file_atomic(out_dir / "details.json", result.details.dump(2) + "\n");
  write_file_atomic(out_dir / "timings.json", timings.dump(2) + "\n");
  return result;
}

}  // namespace cdasr::eval
