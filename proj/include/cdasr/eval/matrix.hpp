#pragma once

#include "cdasr/eval/report.hpp"
#include "cdasr/modular/acoustic_model.hpp"
#include "cdasr/modular/decoder.hpp"
#include "cdasr/s2s/model.hpp"
#include "cdasr/sst/sst.hpp"
#include "cdasr/text/neural_lm.hpp"

#include <iosfwd>

namespace cdasr::eval {

/// A synthetic language is one generator seed; its table column is named `name`.
struct LanguageCondition {
  std::string name;
  uint64_t seed = 0;
};

struct TableSpec {
  std::string name;
  std::vector<std::string> rows;
};

/// `left op right` over Avg. values. A two-label side is a difference: first minus second.
struct OrderingSpec {
  std::string name;
  std::vector<std::string> left;
  std::string op;  // "<" or ">"
  std::vector<std::string> right;

  std::string describe() const;
};

/// Supervised rows: H0, H0+lex, H1, H2, S0, S0+extLM, S1, S2.
/// Self-training rows: "<seed> <s2s|hyb> SST" optionally followed by " + ext LM" (s2s),
/// " + lex. expand" (hyb), " + Set 1 LM" or " + Set 2 LM".
struct MatrixConfig {
  std::vector<LanguageCondition> languages;
  corpus::GeneratorConfig generator;
  corpus::SplitPlan split_plan = corpus::SplitPlan::swahili_scaled();
  uint64_t corpus_seed = 5;
  int subword_units = 200;
  double ngram_discount = 0.7;
  modular::ModularAMConfig modular_am;
  modular::ModularDecodeConfig modular_decode;
  s2s::Seq2SeqConfig seq2seq;
  int s2s_beam = 4;
  text::NeuralLMConfig neural_lm;
  std::vector<double> fusion_weights{0.1, 0.2, 0.3, 0.4, 0.5};
  uint64_t sst_seed = 1;
  std::vector<TableSpec> tables;
  std::vector<OrderingSpec> orderings;

  /// Throws on unknown row labels, duplicate labels or orderings over absent rows.
  void validate() const;
  static MatrixConfig from_json(const json& j);
  json to_json() const;
  static MatrixConfig load(const fs::path& path) { return from_json(read_json(path)); }

  /// The default benchmark: both tables and every directional ordering checked by acceptance.
  static MatrixConfig default_matrix();
};

struct OrderingResult {
  OrderingSpec spec;
  std::optional<double> left, right;

  bool evaluable() const { return left && right; }
  bool holds() const;
  std::string describe() const;  // one line with values and verdict
};

struct MatrixResult {
  std::vector<ResultTable> tables;
  std::vector<OrderingResult> orderings;
  json details;  // per-language diagnostics: tuned fusion weights, pseudotranscript WERs, training reports

  std::optional<double> average(const std::string& row) const;
  bool all_evaluable() const;
  bool all_hold() const;
};

struct MatrixOptions {
  fs::path cache_dir;       // default: <out_dir>/cache
  std::ostream* log = nullptr;
};

/// Trains, decodes and scores every row on every language. Artifacts and decode results are cached
/// under content hashes, so a rerun only recomputes what changed. A failing condition fails its
/// cells and the run continues. Writes <table>.{csv,md,svg}, orderings.md, details.json and
/// timings.json into `out_dir`.
MatrixResult run_experiment_matrix(const MatrixConfig& cfg, const fs::path& out_dir, const MatrixOptions& options = {});

std::vector<OrderingResult> evaluate_orderings(const std::vector<OrderingSpec>& specs,
                                               const std::vector<ResultTable>& tables);
std::string orderings_markdown(const std::vector<OrderingResult>& results);

}  // namespace cdasr::eval
