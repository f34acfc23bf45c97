#include <doctest.h>

#include "cdasr/corpus/corpus.hpp"

#include <map>

using namespace cdasr;
using namespace cdasr::corpus;

namespace {

const LanguageSpec& default_spec() {
  static const LanguageSpec spec = build_language_spec(GeneratorConfig{}, 17);
  return spec;
}

VectorXd empirical_unigram(const std::vector<Utterance>& utts, const LanguageSpec& spec) {
  VectorXd p = VectorXd::Zero(spec.words.size());
  for (const auto& u : utts)
    for (const auto& w : *u.transcript) p[spec.word_index(w)] += 1;
  return p / p.sum();
}

// Nearest-class-mean frame classifier: the simplest trained classifier over aligned frames.
struct CentroidClassifier {
  MatrixXd means;
  void fit(const std::vector<RenderedUtterance>& data, int classes, int dim) {
    means = MatrixXd::Zero(classes, dim);
    VectorXd counts = VectorXd::Zero(classes);
    for (const auto& r : data)
      for (Eigen::Index t = 0; t < r.features.rows(); ++t) {
        means.row(r.frame_symbols[t]) += r.features.row(t).cast<double>();
        counts[r.frame_symbols[t]] += 1;
      }
    for (int c = 0; c < classes; ++c)
      if (counts[c] > 0) means.row(c) /= counts[c];
  }
  double accuracy(const std::vector<RenderedUtterance>& data) const {
    long hit = 0, total = 0;
    for (const auto& r : data)
      for (Eigen::Index t = 0; t < r.features.rows(); ++t) {
        Eigen::Index best;
        (means.rowwise() - r.features.row(t).cast<double>()).rowwise().squaredNorm().minCoeff(&best);
        hit += best == r.frame_symbols[t];
        ++total;
      }
    return double(hit) / double(total);
  }
};

std::vector<RenderedUtterance> rendered(const LanguageSpec& spec, Domain d, int count, uint64_t seed) {
  std::vector<RenderedUtterance> out;
  for (int k = 0; k < count; ++k) {
    auto words = sample_sentence(spec, d, std::nullopt, mix_seed(seed, 2 * k));
    out.push_back(render_aligned(words, d, spec, mix_seed(seed, 2 * k + 1)));
  }
  return out;
}

}  // namespace

TEST_CASE("language spec is deterministic for a fixed seed") {
  auto a = build_language_spec(GeneratorConfig{}, 17);
  auto b = build_language_spec(GeneratorConfig{}, 17);
  CHECK(a.words == b.words);
  CHECK(a.in_bn == b.in_bn);
  CHECK(a.emission_means == b.emission_means);
  CHECK(a.cts.transition == b.cts.transition);
  CHECK(a.bn_topics[1].transition == b.bn_topics[1].transition);
  CHECK(a.bn_channel.gain == b.bn_channel.gain);
  CHECK(a.identifier() == b.identifier());
  auto c = build_language_spec(GeneratorConfig{}, 18);
  CHECK(a.words != c.words);
}

TEST_CASE("language spec invariants") {
  const auto& spec = default_spec();
  for (const auto& w : spec.words)
    for (char ch : w) CHECK(spec.graphemes.find(ch) != std::string::npos);
  auto check_rows = [](const WordDistribution& d) {
    CHECK(d.start.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (Eigen::Index r = 0; r < d.transition.rows(); ++r)
      CHECK(std::abs(d.transition.row(r).sum() - 1.0) < 1e-9);
  };
  check_rows(spec.cts);
  check_rows(spec.bn_topics[0]);
  check_rows(spec.bn_topics[1]);
  int bn_only = 0;
  for (size_t w = 0; w < spec.words.size(); ++w) bn_only += spec.in_bn[w] && !spec.in_cts[w];
  CHECK(bn_only > 0);
}

TEST_CASE("domain unigram marginals differ by at least the floor") {
  const auto& spec = default_spec();
  // Oracle: marginal by Monte Carlo over sampled sentences, independent of the propagation code.
  VectorXd cts = VectorXd::Zero(spec.words.size()), bn = cts;
  for (int k = 0; k < 20000; ++k) {
    for (const auto& w : sample_sentence(spec, Domain::CTS, std::nullopt, mix_seed(99, k))) cts[spec.word_index(w)]++;
    for (const auto& w : sample_sentence(spec, Domain::BN, std::nullopt, mix_seed(98, k))) bn[spec.word_index(w)]++;
  }
  cts /= cts.sum();
  bn /= bn.sum();
  double tv_exact = total_variation(spec.unigram_marginal(Domain::CTS), spec.unigram_marginal(Domain::BN));
  CHECK(tv_exact >= 0.3);
  CHECK(total_variation(cts, bn) >= 0.3);
  CHECK(total_variation(cts, spec.unigram_marginal(Domain::CTS)) < 0.05);
  CHECK(total_variation(bn, spec.unigram_marginal(Domain::BN)) < 0.05);
}

TEST_CASE("unachievable mismatch is rejected") {
  GeneratorConfig cfg;
  cfg.bn_only_fraction = 0.0;
  cfg.divergence_floor = 0.3;
  CHECK_THROWS_WITH_AS(build_language_spec(cfg, 17), doctest::Contains("mismatch unachievable"), Error);
  GeneratorConfig high;
  high.divergence_floor = 0.99;
  CHECK_THROWS_WITH_AS(build_language_spec(high, 17), doctest::Contains("mismatch unachievable"), Error);
}

TEST_CASE("render_features frame counts and channels") {
  const auto& spec = default_spec();
  WordSeq words{spec.words[0], spec.words[1]};
  auto cts = render_features(words, Domain::CTS, spec, 5);
  auto bn = render_features(words, Domain::BN, spec, 5);
  CHECK(cts.rows() == bn.rows());
  CHECK((cts - bn).cwiseAbs().minCoeff() > 0.0f);
  auto aligned = render_aligned(words, Domain::CTS, spec, 5);
  CHECK(static_cast<Eigen::Index>(aligned.frame_symbols.size()) == cts.rows());
  CHECK_THROWS_AS(render_features({}, Domain::CTS, spec, 1), Error);
  CHECK_THROWS_AS(render_features({"zzzzzzz"}, Domain::CTS, spec, 1), Error);
}

TEST_CASE("noise-free identity channel reproduces the emission means") {
  GeneratorConfig cfg;
  cfg.cts_channel = {0.0, 0.0, 0.0};
  cfg.min_duration = cfg.max_duration = 3;
  auto spec = build_language_spec(cfg, 4);
  auto r = render_aligned({spec.words[3]}, Domain::CTS, spec, 11);
  CHECK(r.features.rows() == 3 * static_cast<Eigen::Index>(spec.words[3].size()));
  for (Eigen::Index t = 0; t < r.features.rows(); ++t)
    CHECK((r.features.row(t).cast<double>() - spec.emission_means.row(r.frame_symbols[t])).cwiseAbs().maxCoeff() <
          1e-6);
}

TEST_CASE("one-grapheme word with a fixed duration renders exactly that many frames") {
  GeneratorConfig cfg;
  cfg.min_word_len = 1;
  cfg.max_word_len = 1;
  cfg.word_count = 10;
  cfg.min_duration = cfg.max_duration = 3;
  cfg.divergence_floor = 0.0;
  auto spec = build_language_spec(cfg, 2);
  CHECK(render_features({spec.words[0]}, Domain::BN, spec, 1).rows() == 3);
}

TEST_CASE("corpus split budgets, transcripts and subsets") {
  const auto& spec = default_spec();
  auto plan = SplitPlan::swahili_scaled(300.0, 4.0);
  auto corpus = synth_corpus(spec, plan, 3);
  for (Split s : kAllSplits) {
    double frames = double(corpus.total_frames(s));
    CHECK(std::abs(frames - plan.budget(s)) <= 0.02 * plan.budget(s));
  }
  CHECK(corpus.total_frames(Split::UnsupBn) > corpus.total_frames(Split::SupCts));
  CHECK(corpus.total_frames(Split::UnsupBn) > corpus.total_frames(Split::EvalBn));
  CHECK(double(corpus.total_frames(Split::UnsupBn)) / double(corpus.total_frames(Split::SupCts)) ==
        doctest::Approx(149.0 / 68.3).epsilon(0.03));
  int news = 0, topical = 0;
  for (const auto& u : corpus.split(Split::EvalBn)) {
    REQUIRE(u.eval_subset.has_value());
    CHECK(u.transcript.has_value());
    (*u.eval_subset == EvalSubset::News ? news : topical)++;
  }
  CHECK(std::abs(news - topical) <= 1);
  for (Split s : {Split::UnsupCts, Split::UnsupBn})
    for (const auto& u : corpus.split(s)) {
      CHECK_FALSE(u.transcript.has_value());
      CHECK(corpus.unsup_truth.count(u.utt_id) == 1);
    }
  for (const auto& u : corpus.split(Split::SupCts)) {
    CHECK(u.transcript.has_value());
    CHECK_FALSE(u.eval_subset.has_value());
    CHECK(u.num_frames() >= 1);
    CHECK(u.num_frames() <= spec.config.max_frames);
  }
}

TEST_CASE("equal budgets give equal splits") {
  SplitPlan plan;
  plan.sup_cts = plan.unsup_cts = plan.unsup_bn = plan.eval_bn = 20000;
  auto corpus = synth_corpus(default_spec(), plan, 9);
  for (Split s : kAllSplits) CHECK(std::abs(double(corpus.total_frames(s)) - 20000.0) <= 400.0);
}

TEST_CASE("BN transcripts follow the BN distribution") {
  const auto& spec = default_spec();
  auto corpus = synth_corpus(spec, SplitPlan::swahili_scaled(), 3);
  std::vector<Utterance> bn;
  for (const auto& u : corpus.split(Split::UnsupBn)) {
    Utterance v;
    v.transcript = corpus.unsup_truth.at(u.utt_id);
    bn.push_back(std::move(v));
  }
  CHECK(total_variation(empirical_unigram(bn, spec), spec.unigram_marginal(Domain::BN)) <= 0.05);
  for (const auto& u : bn)
    for (const auto& w : *u.transcript) CHECK(spec.in_bn[spec.word_index(w)]);
}

TEST_CASE("zero supervised budget is an error") {
  SplitPlan plan;
  plan.unsup_bn = 1000;
  CHECK_THROWS_AS(synth_corpus(default_spec(), plan, 1), Error);
}

TEST_CASE("corpus generation is deterministic and round-trips through disk") {
  const auto& spec = default_spec();
  auto plan = SplitPlan::swahili_scaled(60.0, 4.0);
  auto a = synth_corpus(spec, plan, 21);
  auto b = synth_corpus(spec, plan, 21);
  REQUIRE(a.split(Split::SupCts).size() == b.split(Split::SupCts).size());
  CHECK(a.split(Split::SupCts)[0].features == b.split(Split::SupCts)[0].features);
  CHECK(a.text_sets == b.text_sets);

  auto dir = fs::temp_directory_path() / "cdasr_corpus_roundtrip";
  fs::remove_all(dir);
  write_corpus(a, dir);
  auto c = read_corpus(dir);
  for (Split s : kAllSplits) {
    REQUIRE(c.split(s).size() == a.split(s).size());
    for (size_t k = 0; k < a.split(s).size(); ++k) {
      CHECK(c.split(s)[k].utt_id == a.split(s)[k].utt_id);
      CHECK(c.split(s)[k].features == a.split(s)[k].features);
      CHECK(c.split(s)[k].transcript == a.split(s)[k].transcript);
      CHECK(c.split(s)[k].eval_subset == a.split(s)[k].eval_subset);
    }
  }
  CHECK(c.text_sets == a.text_sets);
  CHECK(c.unsup_truth == a.unsup_truth);
  for (const auto& line : read_lines(dir / "manifest.jsonl")) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    std::string split = j.at("split");
    if (split == "unsup_cts" || split == "unsup_bn") CHECK_FALSE(j.contains("transcript"));
  }
  fs::remove_all(dir);
}

TEST_CASE("text sets are sized relative to the supervised transcripts") {
  auto corpus = synth_corpus(default_spec(), SplitPlan::swahili_scaled(), 3);
  long sup = 0;
  for (const auto& u : corpus.split(Split::SupCts)) sup += static_cast<long>(u.transcript->size());
  auto words = [](const std::vector<std::string>& sents) {
    long n = 0;
    for (const auto& s : sents) n += static_cast<long>(split_words(s).size());
    return n;
  };
  CHECK(double(words(corpus.text_sets.at("set1"))) == doctest::Approx(2.0 * sup).epsilon(0.01));
  CHECK(double(words(corpus.text_sets.at("set2"))) == doctest::Approx(25.0 * sup).epsilon(0.01));
}

TEST_CASE("frame classifier: CTS is learnable and BN is mismatched") {
  const auto& spec = default_spec();
  const int classes = spec.config.num_graphemes + 1;
  auto train = rendered(spec, Domain::CTS, 1000, 1);
  auto held_cts = rendered(spec, Domain::CTS, 200, 2);
  auto held_bn = rendered(spec, Domain::BN, 200, 3);
  CentroidClassifier clf;
  clf.fit(train, classes, spec.config.feature_dim);
  double cts = clf.accuracy(held_cts);
  double bn = clf.accuracy(held_bn);
  MESSAGE("frame accuracy CTS " << cts << " BN " << bn);
  CHECK(cts >= 0.90);
  CHECK(cts - bn >= 0.10);
}
