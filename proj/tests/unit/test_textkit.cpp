#include <doctest.h>

#include "cdasr/corpus/corpus.hpp"
#include "cdasr/nn/gradcheck.hpp"
#include "cdasr/text/lexicon.hpp"
#include "cdasr/text/neural_lm.hpp"
#include "cdasr/text/ngram.hpp"
#include "cdasr/text/subword.hpp"

#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace cdasr;
using namespace cdasr::text;

namespace {

std::vector<std::string> synthetic_text(int sentences, uint64_t seed) {
  static const auto spec = corpus::build_language_spec(corpus::GeneratorConfig{}, 17);
  std::vector<std::string> out;
  for (int k = 0; k < sentences; ++k)
    out.push_back(join_words(corpus::sample_sentence(spec, k % 3 ? corpus::Domain::BN : corpus::Domain::CTS,
                                                     std::nullopt, corpus::mix_seed(seed, k))));
  return out;
}

// Interpolated absolute discounting evaluated straight from raw counts.
struct DiscountOracle {
  double D;
  std::map<std::vector<std::string>, double> counts;
  std::map<std::vector<std::string>, double> history_total;
  std::map<std::vector<std::string>, double> history_types;
  std::set<std::string> vocab{"</s>", "<s>", "<unk>"};
  double tokens = 0, types = 0;

  DiscountOracle(const std::vector<std::string>& sentences, double discount) : D(discount) {
    for (const auto& s : sentences) {
      std::vector<std::string> tok{"<s>"};
      for (const auto& w : split_words(s)) tok.push_back(w);
      tok.push_back("</s>");
      vocab.insert(tok.begin(), tok.end());
      for (size_t i = 1; i < tok.size(); ++i) {
        counts[{tok[i]}] += 1;
        counts[{tok[i - 1], tok[i]}] += 1;
        if (i >= 2) counts[{tok[i - 2], tok[i - 1], tok[i]}] += 1;
      }
    }
    for (const auto& [ng, c] : counts) {
      if (ng.size() == 1) {
        tokens += c;
        types += 1;
        continue;
      }
      std::vector<std::string> h(ng.begin(), ng.end() - 1);
      history_total[h] += c;
      history_types[h] += 1;
    }
  }

  double count(const std::vector<std::string>& ng) const {
    auto it = counts.find(ng);
    return it == counts.end() ? 0.0 : it->second;
  }

  double prob(const std::vector<std::string>& history, const std::string& w) const {
    if (history.empty()) {
      if (w == "<s>") return 0.0;
      return std::max(count({w}) - D, 0.0) / tokens + D * types / tokens / double(vocab.size() - 1);
    }
    std::vector<std::string> shorter(history.begin() + 1, history.end());
    double lower = prob(shorter, w);
    auto it = history_total.find(history);
    if (it == history_total.end()) return lower;
    std::vector<std::string> ng = history;
    ng.push_back(w);
    return std::max(count(ng) - D, 0.0) / it->second + D * history_types.at(history) / it->second * lower;
  }
};

double logprob_words(const NGramLM& lm, const std::vector<std::string>& history, const std::string& w) {
  return ngram_logprob(lm, WordSeq(history.begin(), history.end()), w);
}

}  // namespace

TEST_CASE("BPE merges on a single repeated pair") {
  auto v = train_subwords({"abab"}, kNumSpecialUnits + 2 + 2);
  REQUIRE(v.merges().size() == 2);
  CHECK(v.merges()[0] == std::make_pair(std::string("a"), std::string("b")));
  CHECK(v.merges()[1] == std::make_pair(std::string("ab"), std::string("ab")));
  CHECK(decode(v, encode(v, "abab")) == "abab");
}

TEST_CASE("BPE at the minimum size is character level") {
  auto v = train_subwords({"abc cab", "bca"}, kNumSpecialUnits + 3);
  CHECK(v.merges().empty());
  CHECK(v.size() == kNumSpecialUnits + 3);
  CHECK(encode_units(v, "abc") == std::vector<std::string>{"a", "b", "c"});
  CHECK_THROWS_AS(train_subwords({"abc"}, kNumSpecialUnits + 2), Error);
  CHECK_THROWS_AS(train_subwords({}, 10), Error);
}

TEST_CASE("BPE picks the most frequent pair") {
  auto v = train_subwords({"aa aa", "aa"}, kNumSpecialUnits + 1 + 1);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::make_pair(std::string("a"), std::string("a")));
}

TEST_CASE("encode applies merges in order") {
  SubwordVocab v({kBos, kEos, kUnk, kBoundaryUnit, "a", "b", "ab"}, {{"a", "b"}}, 7);
  CHECK(encode_units(v, "aba") == std::vector<std::string>{"ab", "a"});
  CHECK(encode(v, "").empty());
  CHECK(encode_units(v, "ab ba") == std::vector<std::string>{"ab", "_", "b", "a"});
  CHECK(encode_units(v, "az") == std::vector<std::string>{"a", "<unk>"});
}

TEST_CASE("subword vocab invariants and round trip") {
  auto text = synthetic_text(400, 5);
  auto v = train_subwords(text, 120);
  CHECK(v.size() <= 120);
  std::set<char> graphemes;
  for (const auto& s : text)
    for (char ch : s)
      if (ch != ' ') graphemes.insert(ch);
  for (int id = kNumSpecialUnits; id < v.size(); ++id)
    for (char ch : v.unit(id)) CHECK(graphemes.count(ch) == 1);
  for (const auto& s : text) {
    auto ids = encode(v, s);
    for (int id : ids) CHECK((id >= 0 && id < v.size() && id != v.unk()));
    CHECK(decode(v, ids) == s);
  }
  std::mt19937_64 rng(3);
  std::string inv(graphemes.begin(), graphemes.end());
  std::uniform_int_distribution<int> pick(0, static_cast<int>(inv.size()) - 1), len(1, 6), nwords(1, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    WordSeq words(nwords(rng));
    for (auto& w : words)
      for (int k = len(rng); k > 0; --k) w += inv[pick(rng)];
    std::string s = join_words(words);
    CHECK(decode(v, encode(v, s)) == s);
  }
  auto again = SubwordVocab::from_json(v.to_json());
  CHECK(again.units() == v.units());
  CHECK(again.fingerprint() == v.fingerprint());
}

TEST_CASE("lexicon tiers nest") {
  auto base = build_lexicon({{"a b", "b c"}}, LexiconTier::Base);
  CHECK(base.words() == std::vector<std::string>{"a", "b", "c"});
  CHECK(base.entries.at("b") == "b");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto sup = synthetic_text(20, rng());
    auto pseudo = synthetic_text(30, rng());
    auto external = synthetic_text(60, rng());
    auto b = build_lexicon({sup}, LexiconTier::Base);
    auto s = build_lexicon({sup, pseudo}, LexiconTier::Semisup);
    auto e = build_lexicon({sup, pseudo, external}, LexiconTier::Expanded);
    for (const auto& w : b.words()) CHECK(s.contains(w));
    for (const auto& w : s.words()) CHECK(e.contains(w));
    CHECK(b.size() <= s.size());
    CHECK(s.size() <= e.size());
  }
  CHECK_THROWS_AS(build_lexicon({{}, {""}}, LexiconTier::Base), Error);

  auto path = fs::temp_directory_path() / "cdasr_lexicon.txt";
  base.save(path);
  CHECK(read_file(path) == "a\ta\nb\tb\nc\tc\n");
  auto loaded = Lexicon::load(path, LexiconTier::Base);
  CHECK(loaded.entries == base.entries);
  fs::remove(path);
}

TEST_CASE("n-gram hand-evaluated back-off value") {
  std::vector<std::string> text{"a a b"};
  auto lm = train_ngram({{&text, 1}}, 0.5);
  // unigram: P(a) = 1.5/4 + 0.5*3/4/4; bigram from <s>: 0.5/1 + 0.5*1/1*P(a)
  const double p_a = 1.5 / 4 + 0.5 * 3.0 / 4.0 / 4.0;
  CHECK(std::exp(logprob_words(lm, {"<s>"}, "a")) == doctest::Approx(0.5 + 0.5 * p_a).epsilon(1e-12));
  CHECK(std::exp(logprob_words(lm, {}, "a")) == doctest::Approx(p_a).epsilon(1e-12));
}

TEST_CASE("n-gram matches the direct-summation oracle") {
  auto text = synthetic_text(300, 8);
  auto lm = train_ngram({{&text, 1}}, 0.7);
  DiscountOracle oracle(text, 0.7);
  std::vector<std::string> vocab(oracle.vocab.begin(), oracle.vocab.end());
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<size_t> pick(0, vocab.size() - 1);
  double worst = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::string u = vocab[pick(rng)], v = vocab[pick(rng)], w = vocab[pick(rng)];
    if (w == "<s>" || v == "</s>" || u == "</s>") continue;
    if (trial % 2) {  // bias toward seen histories
      const auto& s = split_words(text[trial % text.size()]);
      if (s.size() >= 3) {
        u = s[0];
        v = s[1];
      }
    }
    double expected = std::log(oracle.prob({u, v}, w));
    worst = std::max(worst, std::abs(logprob_words(lm, {u, v}, w) - expected));
    expected = std::log(oracle.prob({v}, w));
    worst = std::max(worst, std::abs(logprob_words(lm, {v}, w) - expected));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("n-gram conditionals normalize and stay positive") {
  auto text = synthetic_text(400, 9);
  auto lm = train_ngram({{&text, 1}}, 0.7);
  auto sum_over = [&](int older, int prev) {
    double s = 0;
    for (int w = 0; w < lm.vocab_size(); ++w) {
      if (w == lm.bos()) continue;
      double lp = lm.logprob_ids(older, prev, w);
      CHECK(std::isfinite(lp));
      s += std::exp(lp);
    }
    return s;
  };
  std::vector<std::pair<int, int>> histories;
  for (const auto& s : text) {
    auto ws = split_words(s);
    histories.push_back({lm.bos(), lm.id(ws[0])});
    if (ws.size() > 1) histories.push_back({lm.id(ws[0]), lm.id(ws[1])});
  }
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick(0, lm.vocab_size() - 1);
  for (int k = 0; k < 100; ++k) histories.push_back({pick(rng), pick(rng)});
  histories.push_back({NGramLM::kNone, lm.bos()});
  histories.push_back({NGramLM::kNone, NGramLM::kNone});
  for (auto [u, v] : histories) CHECK(std::abs(sum_over(u, v) - 1.0) < 1e-6);
}

TEST_CASE("n-gram OOV words share the unknown mass") {
  std::vector<std::string> text{"a b c", "b c a", "c a b a"};
  auto lm = train_ngram({{&text, 1}}, 0.7);
  DiscountOracle oracle(text, 0.7);
  double expected = std::log(oracle.prob({"a", "b"}, "<unk>") / 5.0);
  CHECK(ngram_logprob(lm, {"a", "b"}, "zzz", 5) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ngram_logprob(lm, {}, "a") == doctest::Approx(std::log(oracle.prob({}, "a"))).epsilon(1e-12));
  CHECK(ngram_logprob(lm, {"q", "r"}, "zzz") < 0);
}

TEST_CASE("n-gram with a tiny discount approaches maximum likelihood") {
  std::vector<std::string> text{"a b c", "a b d", "a b c"};
  auto lm = train_ngram({{&text, 1}}, 1e-4);
  CHECK(std::exp(logprob_words(lm, {"a", "b"}, "c")) == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
  CHECK_THROWS_AS(train_ngram({{&text, 1}}, 0.0), Error);
  CHECK_THROWS_AS(train_ngram({{&text, 1}}, 1.0), Error);
}

TEST_CASE("adding text never lowers a seen count") {
  auto text = synthetic_text(100, 2);
  auto more = synthetic_text(50, 3);
  auto small = train_ngram({{&text, 1}});
  auto big = train_ngram({{&text, 1}, {&more, 1}});
  for (const auto& [ng, c] : small.counts()) {
    std::vector<int> mapped;
    for (int id : ng) mapped.push_back(big.id(small.vocab()[id]));
    CHECK(big.counts().at(mapped) >= c);
  }
  auto doubled = train_ngram({{&text, 2}});
  for (const auto& [ng, c] : small.counts()) CHECK(doubled.counts().at(ng) == 2 * c);
}

TEST_CASE("ARPA round trip is byte-stable and preserves scores") {
  auto text = synthetic_text(200, 6);
  auto lm = train_ngram({{&text, 1}});
  std::ostringstream a;
  lm.write_arpa(a);
  std::istringstream in(a.str());
  auto back = NGramLM::read_arpa(in);
  std::ostringstream b;
  back.write_arpa(b);
  CHECK(a.str() == b.str());
  auto ws = split_words(text[0]);
  CHECK(ngram_sentence_logprob(back, ws) == doctest::Approx(ngram_sentence_logprob(lm, ws)).epsilon(1e-6));
}

TEST_CASE("neural LM gradients match finite differences") {
  NeuralLMConfig cfg;
  cfg.layers = 2;
  cfg.dim = 3;
  cfg.embed_dim = 4;
  cfg.seed = 5;
  NeuralLMNet<double> net(7, cfg);
  std::vector<std::vector<int>> seqs{{4, 5, 3, 6}, {5}, {6, 6, 4}};
  auto results = nn::check_gradients(net.params(), [&](bool with_grad) {
    if (with_grad) return net.train_batch(seqs, 0, 1);
    double nll = 0;
    net.score(seqs, 0, 1, &nll);
    return nll;
  });
  for (const auto& r : results) {
    INFO(r.param);
    CHECK(r.relative_error <= 1e-3);
  }
}

TEST_CASE("neural LM distributions, chain rule and determinism") {
  auto text = synthetic_text(300, 12);
  auto vocab = train_subwords(text, 60);
  std::vector<std::vector<int>> seqs;
  for (const auto& s : text) seqs.push_back(encode(vocab, s));
  NeuralLMConfig cfg;
  cfg.max_steps = 300;
  cfg.dim = 32;
  cfg.embed_dim = 32;
  auto lm = train_neural_lm(std::vector<std::vector<int>>(seqs.begin() + 30, seqs.end()), vocab, cfg);

  auto state = lm.net().start(vocab.bos());
  for (int step = 0; step < 5; ++step) {
    CHECK(std::abs(state.logprobs.cast<double>().array().exp().sum() - 1.0) < 1e-6);
    state = lm.net().advance(state, seqs[0][step % seqs[0].size()]);
  }
  double chain = 0;
  for (size_t k = 0; k < seqs[1].size(); ++k)
    chain += neural_lm_logprob(lm, std::vector<int>(seqs[1].begin(), seqs[1].begin() + k), seqs[1][k]);
  chain += neural_lm_logprob(lm, seqs[1], vocab.eos());
  CHECK(chain == doctest::Approx(neural_lm_sequence_logprob(lm, seqs[1])).epsilon(1e-4));

  std::vector<std::vector<int>> held(seqs.begin(), seqs.begin() + 30);
  double p1 = neural_lm_perplexity(lm, held);
  double p2 = neural_lm_perplexity(lm, held);
  CHECK(p1 == p2);
  CHECK(p1 < double(vocab.size()));
  CHECK_THROWS_AS(neural_lm_logprob(lm, {}, vocab.size()), Error);
  CHECK_THROWS_AS(train_neural_lm({{0, 999}}, vocab, cfg), Error);

  auto ck = lm.to_checkpoint();
  auto restored = NeuralLM::from_checkpoint(Checkpoint::deserialize(ck.serialize()));
  CHECK(neural_lm_perplexity(restored, held) == p1);
}

TEST_CASE("neural LM training lowers held-out perplexity") {
  auto text = synthetic_text(600, 13);
  auto vocab = train_subwords(text, 80);
  std::vector<std::vector<int>> seqs;
  for (const auto& s : text) seqs.push_back(encode(vocab, s));
  std::vector<std::vector<int>> held(seqs.begin(), seqs.begin() + 60), train(seqs.begin() + 60, seqs.end());
  NeuralLMConfig cfg;
  cfg.max_steps = 400;
  NeuralLMTrainReport report;
  train_neural_lm(train, vocab, cfg, held, &report);
  CHECK(report.final_heldout_ppl < report.initial_heldout_ppl);
  CHECK(report.final_heldout_ppl < double(vocab.size()));
}

TEST_CASE("zero-initialized output layer gives a uniform distribution") {
  auto vocab = train_subwords({"ab ba", "abba"}, 8);
  NeuralLMConfig cfg;
  cfg.zero_init_output = true;
  NeuralLM lm(vocab, cfg);
  CHECK(neural_lm_logprob(lm, {4, 5}, 5) == doctest::Approx(-std::log(double(vocab.size()))).epsilon(1e-6));
}

TEST_CASE("neural LM memorizes a repeated sentence") {
  auto vocab = train_subwords({"ab ba abba"}, 10);
  std::vector<std::vector<int>> seqs(64, encode(vocab, "ab ba abba"));
  NeuralLMConfig cfg;
  cfg.max_steps = 2000;
  NeuralLMTrainReport report;
  train_neural_lm(seqs, vocab, cfg, {}, &report);
  MESSAGE("final memorization loss " << report.step_losses.back());
  CHECK(report.step_losses.back() < 0.05);
}
