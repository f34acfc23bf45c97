#include <doctest.h>

#include "cdasr/eval/matrix.hpp"
#include "cdasr/eval/report.hpp"
#include "cdasr/eval/wer.hpp"

#include <random>
#include <sstream>

using namespace cdasr;
using namespace cdasr::eval;

namespace {

int edit_distance(const WordSeq& a, const WordSeq& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

WordSeq random_words(std::mt19937_64& rng, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len), sym(0, alphabet - 1);
  WordSeq out(len(rng));
  for (auto& w : out) w = std::string(1, char('a' + sym(rng)));
  return out;
}

corpus::Utterance eval_utt(const std::string& id, corpus::EvalSubset subset, const std::string& ref) {
  corpus::Utterance u;
  u.utt_id = id;
  u.split = corpus::Split::EvalBn;
  u.domain = corpus::Domain::BN;
  u.eval_subset = subset;
  u.transcript = split_words(ref);
  return u;
}

ResultTable sample_table() {
  ResultTable t("sample", {"L1", "L2"}, {"H0", "H1, tuned", "S0 \"x\""});
  t.at(0, 0).wer = 40.0;
  t.at(0, 1).wer = 50.3;
  t.at(1, 0).wer = 30.1;
  t.at(1, 1).wer = 20.0;
  t.at(2, 0).wer = 70.0;
  t.at(2, 1) = Cell::failed("training diverged");
  for (auto& row : t.cells)
    for (auto& c : row)
      if (c.ok()) c.error.clear();
  return t;
}

MatrixConfig tiny_matrix() {
  MatrixConfig c;
  c.languages = {{"T1", 3}};
  c.generator.word_count = 60;
  c.split_plan = corpus::SplitPlan::swahili_scaled(200.0, 1.0);
  c.subword_units = 60;
  c.modular_am.epochs = 2;
  c.modular_am.conv_dim = c.modular_am.hidden = 16;
  c.modular_decode.beam = 4;
  c.seq2seq.epochs = 1;
  c.seq2seq.batch_size = 0;  // invalid: the seq2seq rows fail
  c.tables = {{"tiny", {"H0", "H2", "S0"}}};
  c.orderings = {{"lm", {"H2"}, "<", {"H0"}}, {"s2s", {"S0"}, ">", {"H0"}}};
  return c;
}

}  // namespace

TEST_CASE("wer trivial cases") {
  auto w = wer({"a", "b", "c"}, {"a", "b", "c"});
  CHECK(w.wer_percent() == 0.0);
  w = wer({"a", "b", "c"}, {});
  CHECK(w.deletions == 3);
  CHECK(w.wer_percent() == doctest::Approx(100.0));
  w = wer({"a"}, {"b", "c"});
  CHECK(w.edits() == 2);
  CHECK(w.substitutions == 1);
  CHECK(w.insertions == 1);
  CHECK_THROWS_AS(wer({}, {"a"}), Error);
}

TEST_CASE("wer edits equal an independent edit-distance oracle on 1k random pairs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ref = random_words(rng, 10, 4);
    if (ref.empty()) ref.push_back("a");
    auto hyp = random_words(rng, 10, 4);
    auto w = wer(ref, hyp);
    REQUIRE(w.edits() == edit_distance(ref, hyp));
    CHECK(w.ref_len == long(ref.size()));
    CHECK(w.deletions - w.insertions == long(ref.size()) - long(hyp.size()));
  }
}

TEST_CASE("wer with roles swapped keeps substitutions and swaps deletions with insertions") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = random_words(rng, 8, 3), b = random_words(rng, 8, 3);
    if (a.empty() || b.empty()) continue;
    auto ab = wer(a, b), ba = wer(b, a);
    CHECK(ab.edits() == ba.edits());
    CHECK(ab.substitutions == ba.substitutions);
    CHECK(ab.deletions == ba.insertions);
    CHECK(ab.insertions == ba.deletions);
  }
}

TEST_CASE("corpus WER pools counts instead of averaging utterance WERs") {
  std::vector<corpus::Utterance> eval{eval_utt("u1", corpus::EvalSubset::News, "a"),
                                      eval_utt("u2", corpus::EvalSubset::News, "a b c d e f g h i j")};
  std::map<std::string, WordSeq> hyps{{"u1", {"x"}}, {"u2", split_words("a b c d e f g h i j")}};
  auto s = score_eval(hyps, eval);
  CHECK(s.subsets.size() == 1);
  CHECK(s.average == doctest::Approx(100.0 / 11.0));
  CHECK(s.average != doctest::Approx((100.0 + 0.0) / 2.0));
}

TEST_CASE("score_eval averages the subsets") {
  std::vector<corpus::Utterance> eval;
  std::map<std::string, WordSeq> hyps;
  // news: 4 errors in 10 words; topical: 5 errors in 10 words
  eval.push_back(eval_utt("n1", corpus::EvalSubset::News, "a b c d e f g h i j"));
  hyps["n1"] = split_words("a b c d e f x x x x");
  eval.push_back(eval_utt("t1", corpus::EvalSubset::Topical, "a b c d e f g h i j"));
  hyps["t1"] = split_words("a b c d e x x x x x");
  auto s = score_eval(hyps, eval);
  CHECK(s.subsets.at(corpus::EvalSubset::News).wer_percent() == doctest::Approx(40.0));
  CHECK(s.subsets.at(corpus::EvalSubset::Topical).wer_percent() == doctest::Approx(50.0));
  CHECK(s.average == doctest::Approx(45.0));
  CHECK(score_eval(hyps, eval).average == s.average);

  std::vector<corpus::Utterance> news_only{eval[0]};
  CHECK(score_eval(hyps, news_only).average == doctest::Approx(40.0));

  hyps.erase("t1");
  try {
    score_eval(hyps, eval);
    FAIL("missing hypothesis accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("t1") != std::string::npos);
  }
}

TEST_CASE("average_across reproduces the published averages") {
  CHECK(average_across({60.4, 63.4, 58.8, 68.6, 82.3}) == doctest::Approx(66.7));
  CHECK(average_across({31.1, 24.1, 20.1, 32.4, 49.8}) == doctest::Approx(31.5));
  CHECK(average_across({26.9, 22.2, 18.7, 30.1, 46.9}) == doctest::Approx(29.0));
  CHECK(average_across({0.05}) == doctest::Approx(0.1));
  CHECK(average_across({-0.05}) == doctest::Approx(-0.1));
  CHECK(average_across({1.0, 2.0}) == doctest::Approx(1.5));
  CHECK_THROWS_AS(average_across({}), Error);
}

TEST_CASE("result table averages and CSV round trip") {
  auto t = sample_table();
  REQUIRE(t.average(0));
  CHECK(*t.average(0) == doctest::Approx(45.2));
  CHECK(*t.average(1) == doctest::Approx(25.1));
  CHECK_FALSE(t.average(2));

  auto csv = to_csv(t);
  auto back = parse_csv(csv, "sample");
  CHECK(back.rows == t.rows);
  CHECK(back.columns == t.columns);
  for (size_t r = 0; r < t.rows.size(); ++r)
    for (size_t c = 0; c < t.columns.size(); ++c) {
      CHECK(back.at(r, c).ok() == t.at(r, c).ok());
      if (t.at(r, c).ok()) CHECK(*back.at(r, c).wer == *t.at(r, c).wer);
    }
  CHECK(to_csv(back) == csv);

  // a tampered Avg. column is rejected
  auto bad = csv;
  bad.replace(bad.find("45.2"), 4, "45.3");
  CHECK_THROWS_AS(parse_csv(bad, "x"), Error);
}

TEST_CASE("markdown layout and failed cells") {
  auto t = sample_table();
  auto md = to_markdown(t);
  std::istringstream in(md);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] == '|' && line.find("---") == std::string::npos) ++rows;
  CHECK(rows == int(t.rows.size()) + 1);
  CHECK(md.find("| S0 \"x\" | 70.0 | — | — |") != std::string::npos);
  CHECK(md.find("| H0 | 40.0 | 50.3 | 45.2 |") != std::string::npos);
}

TEST_CASE("emit_report is byte-stable and reports unwritable paths") {
  auto t = sample_table();
  auto dir = fs::temp_directory_path() / "cdasr_test_report";
  fs::remove_all(dir);
  auto files = emit_report(t, dir / "a");
  auto again = emit_report(t, dir / "b");
  REQUIRE(files.size() == 3);
  for (size_t k = 0; k < files.size(); ++k) CHECK(read_file(files[k]) == read_file(again[k]));
  CHECK(read_file(dir / "a" / "sample.svg").find("<svg") == 0);

  write_file_atomic(dir / "plain", "x");
  CHECK_THROWS_AS(emit_report(t, dir / "plain" / "sub"), Error);
}

TEST_CASE("matrix configuration validation and round trip") {
  auto d = MatrixConfig::default_matrix();
  CHECK_NOTHROW(d.validate());
  auto back = MatrixConfig::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
  size_t rows = 0;
  for (const auto& t : d.tables) rows += t.rows.size();
  CHECK(rows == 8 + 15);

  auto c = d;
  c.tables[0].rows.push_back("H3");
  CHECK_THROWS_AS(c.validate(), Error);
  c = d;
  c.tables[1].rows.push_back("H1 hyb SST + ext LM");
  CHECK_THROWS_AS(c.validate(), Error);
  c = d;
  c.tables[1].rows.push_back("H1 s2s SST + lex. expand");
  CHECK_THROWS_AS(c.validate(), Error);
  c = d;
  c.tables[1].rows.push_back("H0");
  CHECK_THROWS_AS(c.validate(), Error);
  c = d;
  c.tables[1].rows = {"H1 s2s SST"};
  CHECK_THROWS_AS(c.validate(), Error);  // orderings refer to removed rows
  c = d;
  c.languages.push_back(c.languages[0]);
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("orderings over Avg. values") {
  auto t = sample_table();
  std::vector<OrderingSpec> specs{{"a", {"H1, tuned"}, "<", {"H0"}},
                                  {"b", {"H1, tuned"}, ">", {"H0"}},
                                  {"c", {"H0", "H1, tuned"}, "<", {"H1, tuned"}},
                                  {"d", {"S0 \"x\""}, ">", {"H0"}}};
  auto r = evaluate_orderings(specs, {t});
  CHECK(r[0].holds());
  CHECK_FALSE(r[1].holds());
  CHECK(r[1].evaluable());
  REQUIRE(r[2].left);
  CHECK(*r[2].left == doctest::Approx(20.1));
  CHECK(r[2].holds());
  CHECK_FALSE(r[3].evaluable());
  CHECK(r[3].describe().find("UNEVALUABLE") != std::string::npos);
  auto md = orderings_markdown(r);
  CHECK(md.find("unevaluable") != std::string::npos);
}

TEST_CASE("tiny matrix: failed cells, cached rerun and determinism") {
  auto dir = fs::temp_directory_path() / "cdasr_test_matrix";
  fs::remove_all(dir);
  auto cfg = tiny_matrix();
  auto first = run_experiment_matrix(cfg, dir / "run1");
  REQUIRE(first.tables.size() == 1);
  const auto& t = first.tables[0];
  CHECK(t.rows.size() == 3);
  CHECK(t.columns.size() == 1);
  CHECK(t.at(0, 0).ok());
  CHECK(t.at(1, 0).ok());
  CHECK_FALSE(t.at(2, 0).ok());
  CHECK(first.orderings[0].evaluable());
  CHECK_FALSE(first.orderings[1].evaluable());
  CHECK_FALSE(first.all_evaluable());
  auto csv = read_file(dir / "run1" / "tiny.csv");
  CHECK(csv.find("condition,T1,Avg.\n") == 0);
  CHECK(read_file(dir / "run1" / "tiny.md").find("| S0 | — | — |") != std::string::npos);
  CHECK(read_json(dir / "run1" / "details.json").at("T1").at("errors").contains("S0"));

  // rerun over the same cache: nothing is rebuilt except the failed condition
  run_experiment_matrix(cfg, dir / "run2", {dir / "run1" / "cache"});
  CHECK(read_file(dir / "run2" / "tiny.csv") == csv);
  auto builds = read_json(dir / "run2" / "timings.json").at("T1").at("builds");
  for (const auto& [id, secs] : builds.items()) CHECK(id.rfind("s2s-", 0) == 0);

  // fresh cache, same seed: identical table
  run_experiment_matrix(cfg, dir / "run3");
  CHECK(read_file(dir / "run3" / "tiny.csv") == csv);

  cfg.tables = {{"single", {"H0"}}};
  cfg.orderings.clear();
  auto single = run_experiment_matrix(cfg, dir / "run4", {dir / "run1" / "cache"});
  CHECK(single.tables[0].rows.size() == 1);
  CHECK(parse_csv(read_file(dir / "run4" / "single.csv"), "single").columns.size() == 1);
  CHECK(single.all_evaluable());
}
