#include <doctest.h>

#include "cdasr/eval/wer.hpp"
#include "cdasr/nn/gradcheck.hpp"
#include "cdasr/s2s/decoder.hpp"

#include <cmath>
#include <random>

using namespace cdasr;
using namespace cdasr::s2s;

namespace {

FeatureMatrix random_features(int frames, int dims, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n01;
  FeatureMatrix f(frames, dims);
  for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = n01(rng);
  return f;
}

text::SubwordVocab two_unit_vocab() { return text::SubwordVocab({"<s>", "</s>", "<unk>", "_", "a", "b"}, {}, 6); }

Seq2SeqConfig tiny_config(uint64_t seed) {
  Seq2SeqConfig c;
  c.conv_dim = 3;
  c.enc_hidden = 3;
  c.enc_layers = 1;
  c.embed_dim = 3;
  c.dec_hidden = 4;
  c.attn_dim = 3;
  c.seed = seed;
  return c;
}

// Larger weights than the default initialization make the tiny model's distributions far from uniform.
void sharpen(nn::ParamSet<float>& ps, float scale) {
  for (const auto& p : ps.all()) p->value *= scale;
}

const corpus::LanguageSpec& language() {
  static const auto spec = corpus::build_language_spec(corpus::GeneratorConfig{}, 17);
  return spec;
}

}  // namespace

TEST_CASE("learning-rate schedule closed forms") {
  LRSchedule s;
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 250) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(s, 500) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(s, 500 + 150000 - 1) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(s, 500 + 150000 + 130000) == doctest::Approx(5.05e-4).epsilon(1e-12));
  CHECK(lr_at(s, 500 + 150000 + 260000) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(s, 500 + 150000 + 260000 + 12345) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(s, -1), Error);
}

TEST_CASE("learning-rate schedule is continuous at phase boundaries") {
  for (const auto& s : {LRSchedule{}, LRSchedule::scaled_to(1000, 2e-3, 1e-4), LRSchedule::scaled_to(37, 1e-3, 1e-5)}) {
    const double max_step = std::max(s.peak_rate / double(s.warmup_steps),
                                     (s.peak_rate - s.floor_rate) / double(s.decay_steps));
    for (long b : {s.warmup_steps, s.warmup_steps + s.hold_steps, s.total_steps()}) {
      INFO("boundary " << b);
      CHECK(std::abs(lr_at(s, b) - lr_at(s, b - 1)) <= max_step * (1 + 1e-9));
    }
    CHECK(lr_at(s, s.total_steps()) == doctest::Approx(s.floor_rate).epsilon(1e-12));
  }
  auto scaled = LRSchedule::scaled_to(1000, 1e-3, 1e-5);
  CHECK(scaled.total_steps() == 1000);
}

TEST_CASE("label-smoothed loss closed forms") {
  MatrixXd uniform = MatrixXd::Constant(3, 4, 0.25);
  for (double p : {0.0, 0.1, 0.5, 0.9}) CHECK(label_smoothed_loss(uniform, {0, 2, 3}, p) == doctest::Approx(std::log(4.0)));

  MatrixXd sure(1, 4);
  sure << 0.99, 0.01 / 3, 0.01 / 3, 0.01 / 3;
  CHECK(label_smoothed_loss(sure, {0}, 0.0) == doctest::Approx(-std::log(0.99)));

  MatrixXd d(1, 4);
  d << 0.7, 0.1, 0.1, 0.1;
  double by_hand = -(0.925 * std::log(0.7) + 0.025 * 3 * std::log(0.1));
  CHECK(label_smoothed_loss(d, {0}, 0.1) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(label_smoothed_loss(d, {0}, 0.1) == doctest::Approx(0.5027).epsilon(1e-4));

  MatrixXd bad = d;
  bad(0, 0) += 2e-4;
  CHECK_THROWS_AS(label_smoothed_loss(bad, {0}, 0.1), Error);
  bad(0, 0) = 0.7 + 5e-5;
  CHECK_NOTHROW(label_smoothed_loss(bad, {0}, 0.1));
  CHECK_THROWS_AS(label_smoothed_loss(d, {0}, 1.0), Error);
  CHECK_THROWS_AS(label_smoothed_loss(d, {0, 1}, 0.1), Error);
}

TEST_CASE("teacher-forced loss equals the smoothed loss of stepwise distributions") {
  Seq2SeqNet<double> net(3, 6, tiny_config(4));
  for (const auto& p : net.params().all()) p->value *= 3.0;
  FeatureMatrix f = random_features(11, 3, 5);
  std::vector<int> target{4, 3, 5, 5};
  const int bos = 0, eos = 1;

  auto enc = net.encode({&f});
  auto state = net.initial_state(1);
  MatrixXd dists(target.size() + 1, 6);
  std::vector<int> gold = target;
  gold.push_back(eos);
  int prev = bos;
  for (size_t t = 0; t < gold.size(); ++t) {
    dists.row(t) = net.step(enc[0], {prev}, state).col(0).array().exp().transpose();
    prev = gold[t];
  }
  for (double p : {0.0, 0.1}) {
    double teacher = net.loss({&f}, {target}, p, bos, eos, false);
    CHECK(teacher == doctest::Approx(label_smoothed_loss(dists, gold, p)).epsilon(1e-10));
  }
}

TEST_CASE("seq2seq loss gradients match finite differences") {
  Seq2SeqNet<double> net(3, 6, tiny_config(8));
  for (const auto& p : net.params().all()) p->value.array() += 0.05;
  FeatureMatrix a = random_features(9, 3, 1), b = random_features(6, 3, 2);
  std::vector<std::vector<int>> targets{{4, 5, 4}, {5}};
  auto results = nn::check_gradients(net.params(), [&](bool with_grad) {
    return net.loss({&a, &b}, targets, 0.1, 0, 1, with_grad);
  });
  CHECK(results.size() == net.params().all().size());
  for (const auto& r : results) {
    INFO(r.param);
    CHECK(r.relative_error <= 1e-3);
  }
}

TEST_CASE("encoder length and attention normalization") {
  Seq2SeqNet<float> net(5, 6, tiny_config(3));
  for (int frames = 1; frames <= 21; ++frames) CHECK(net.out_length(frames) == (frames + 3) / 4);
  FeatureMatrix f = random_features(37, 5, 9);
  auto enc = net.encode({&f});
  CHECK(enc[0].enc.cols() == 10);
  auto state = net.initial_state(3);
  std::vector<Vec<float>> weights;
  for (int t = 0; t < 6; ++t) {
    net.step(enc[0], {0, 4, 5}, state, &weights);
    REQUIRE(weights.size() == 3);
    for (const auto& w : weights) {
      CHECK(w.size() == 10);
      CHECK(std::abs(w.cast<double>().sum() - 1.0) <= 1e-6);
      CHECK(w.minCoeff() >= 0.0f);
    }
  }
}

TEST_CASE("SpecAugment bounds and semantics") {
  FeatureMatrix f = random_features(60, 8, 3);
  CHECK(spec_augment(f, SpecAugmentPolicy::none(), 5) == f);

  SpecAugmentPolicy full{8, 1, 0, 0, 0.0};
  bool saw_full_band = false;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    SpecAugmentTrace tr;
    auto out = spec_augment(f, full, seed, &tr);
    REQUIRE(tr.freq_masks.size() == 1);
    if (tr.freq_masks[0].width == 8) {
      saw_full_band = true;
      CHECK((out.array() == tr.fill).all());
    }
  }
  CHECK(saw_full_band);

  SpecAugmentPolicy policy;
  policy.time_mask_width = 30;
  policy.time_mask_count = 3;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    int frames = std::uniform_int_distribution<int>(1, 120)(rng);
    FeatureMatrix g = random_features(frames, 8, trial);
    SpecAugmentTrace tr;
    auto out = spec_augment(g, policy, 1000 + trial, &tr);
    REQUIRE(tr.freq_masks.size() == size_t(policy.freq_mask_count));
    REQUIRE(tr.time_masks.size() == size_t(policy.time_mask_count));
    std::vector<bool> row_masked(frames, false), col_masked(8, false);
    for (auto m : tr.time_masks) {
      CHECK(m.width <= policy.time_mask_width);
      for (int t = m.start; t < m.start + m.width; ++t) row_masked[t] = true;
    }
    for (auto m : tr.freq_masks) {
      CHECK(m.width <= policy.freq_mask_width);
      for (int k = m.start; k < m.start + m.width; ++k) col_masked[k] = true;
    }
    int masked_rows = static_cast<int>(std::count(row_masked.begin(), row_masked.end(), true));
    CHECK(masked_rows <= policy.max_time_mask_fraction * frames + 1e-9);
    float mean = static_cast<float>(g.cast<double>().mean());
    CHECK(tr.fill == mean);
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < 8; ++k) {
        if (row_masked[t] || col_masked[k])
          CHECK(out(t, k) == mean);
        else
          CHECK(out(t, k) == g(t, k));
      }
  }
  CHECK_THROWS_AS(spec_augment(f, SpecAugmentPolicy{-1, 1, 0, 0, 0.0}, 1), Error);
}

TEST_CASE("beam 1 is the greedy rollout and zero fusion weight changes nothing") {
  auto vocab = two_unit_vocab();
  Seq2SeqModel model(vocab, 4, tiny_config(21));
  sharpen(model.net().params(), 2.5f);
  text::NeuralLMConfig lcfg;
  lcfg.layers = 1;
  lcfg.dim = 4;
  lcfg.embed_dim = 4;
  text::NeuralLM lm(vocab, lcfg);
  for (uint64_t trial = 0; trial < 20; ++trial) {
    FeatureMatrix f = random_features(16, 4, 100 + trial);
    Seq2SeqDecodeConfig cfg;
    cfg.beam = 1;
    auto h = s2s_decode(model, f, cfg);

    auto enc = model.net().encode({&f});
    auto state = model.net().initial_state(1);
    std::vector<int> greedy;
    int prev = vocab.bos();
    const int max_len = static_cast<int>(enc[0].enc.cols());
    for (int t = 0; t <= max_len; ++t) {
      MatrixXf lp = model.net().step(enc[0], {prev}, state);
      lp(vocab.bos(), 0) = lp(vocab.unk(), 0) = -std::numeric_limits<float>::infinity();
      Eigen::Index best = vocab.eos();
      if (t < max_len) lp.col(0).maxCoeff(&best);
      if (best == vocab.eos()) break;
      greedy.push_back(static_cast<int>(best));
      prev = static_cast<int>(best);
    }
    CHECK(h.units == greedy);

    cfg.beam = 3;
    auto plain = s2s_decode(model, f, cfg);
    cfg.fusion = Fusion{&lm, 0.0};
    auto fused = s2s_decode(model, f, cfg);
    CHECK(fused.units == plain.units);
    CHECK(fused.total_score == plain.total_score);
  }
}

TEST_CASE("unlimited beam matches exhaustive enumeration") {
  auto vocab = two_unit_vocab();
  text::NeuralLMConfig lcfg;
  lcfg.layers = 1;
  lcfg.dim = 5;
  lcfg.embed_dim = 5;
  lcfg.seed = 3;
  text::NeuralLM lm(vocab, lcfg);
  sharpen(lm.net().params(), 3.0f);
  const std::vector<int> emit{3, 4, 5};
  const int max_len = 3;

  std::vector<std::vector<int>> strings{{}};
  for (size_t k = 0; k < strings.size(); ++k)
    if (strings[k].size() < size_t(max_len))
      for (int u : emit) {
        auto s = strings[k];
        s.push_back(u);
        strings.push_back(s);
      }
  REQUIRE(strings.size() == 1 + 3 + 9 + 27);

  int trials = 0;
  for (uint64_t seed = 0; seed < 12; ++seed) {
    Seq2SeqModel model(vocab, 4, tiny_config(40 + seed));
    sharpen(model.net().params(), 3.0f);
    FeatureMatrix f = random_features(10, 4, 200 + seed);
    for (double weight : {0.0, 0.4}) {
      std::vector<std::vector<float>> am;
      std::vector<const FeatureMatrix*> feats(strings.size(), &f);
      model.net().loss(feats, strings, 0.0, vocab.bos(), vocab.eos(), false, &am);
      size_t best = 0;
      std::vector<double> score(strings.size());
      for (size_t k = 0; k < strings.size(); ++k) {
        double a = 0;
        for (float v : am[k]) a += v;
        double l = weight != 0.0 ? text::neural_lm_sequence_logprob(lm, strings[k], true) : 0.0;
        score[k] = (a + weight * l) / double(strings[k].size() + 1);
        if (score[k] > score[best]) best = k;
      }
      Seq2SeqDecodeConfig cfg;
      cfg.beam = kUnlimitedBeam;
      cfg.max_length = max_len;
      cfg.fusion = Fusion{&lm, weight};
      auto h = s2s_decode(model, f, cfg);
      INFO("seed " << seed << " weight " << weight);
      CHECK(h.units == strings[best]);
      CHECK(h.total_score == doctest::Approx(score[best]).epsilon(1e-5));
      ++trials;
    }
  }
  CHECK(trials == 24);
}

TEST_CASE("decode errors and score monotonicity in the beam") {
  auto vocab = two_unit_vocab();
  Seq2SeqModel model(vocab, 4, tiny_config(5));
  sharpen(model.net().params(), 2.0f);
  FeatureMatrix f = random_features(20, 4, 1);
  Seq2SeqDecodeConfig cfg;
  cfg.beam = 0;
  CHECK_THROWS_AS(s2s_decode(model, f, cfg), Error);

  auto other = text::SubwordVocab({"<s>", "</s>", "<unk>", "_", "a", "c"}, {}, 6);
  text::NeuralLMConfig lcfg;
  lcfg.layers = 1;
  lcfg.dim = 4;
  lcfg.embed_dim = 4;
  text::NeuralLM lm(other, lcfg);
  cfg.beam = 2;
  cfg.fusion = Fusion{&lm, 0.3};
  CHECK_THROWS_AS(s2s_decode(model, f, cfg), Error);
  CHECK_THROWS_AS(s2s_decode(model, random_features(20, 5, 1), Seq2SeqDecodeConfig{}), Error);

  int checked = 0;
  for (uint64_t trial = 0; trial < 25; ++trial) {
    Seq2SeqModel m(vocab, 4, tiny_config(300 + trial));
    sharpen(m.net().params(), 2.0f);
    FeatureMatrix g = random_features(24, 4, trial);
    double last = -std::numeric_limits<double>::infinity();
    for (int beam : {1, 2, 3, 4, 6, 8}) {
      Seq2SeqDecodeConfig c;
      c.beam = beam;
      double s = s2s_decode(m, g, c).total_score;
      CHECK(s >= last);
      last = s;
      ++checked;
    }
  }
  CHECK(checked == 150);
}

TEST_CASE("checkpoint round trip reproduces decodes") {
  auto vocab = two_unit_vocab();
  Seq2SeqModel model(vocab, 4, tiny_config(6));
  sharpen(model.net().params(), 2.0f);
  auto restored = Seq2SeqModel::from_checkpoint(Checkpoint::deserialize(model.to_checkpoint().serialize()));
  FeatureMatrix f = random_features(18, 4, 2);
  Seq2SeqDecodeConfig cfg;
  cfg.beam = 3;
  auto a = s2s_decode(model, f, cfg), b = s2s_decode(restored, f, cfg);
  CHECK(a.units == b.units);
  CHECK(a.total_score == b.total_score);
  CHECK(restored.config().to_json() == model.config().to_json());
  CHECK_THROWS_AS(Seq2SeqModel::from_checkpoint(Checkpoint{}), Error);
}

TEST_CASE("validation split is deterministic and sized") {
  std::vector<corpus::Utterance> utts(100);
  std::vector<const corpus::Utterance*> ptrs;
  for (auto& u : utts) ptrs.push_back(&u);
  auto [train, val] = split_validation(ptrs, 0.05, 7);
  CHECK(val.size() == 5);
  CHECK(train.size() == 95);
  auto again = split_validation(ptrs, 0.05, 7);
  CHECK(again.second == val);
  CHECK(split_validation(ptrs, 0.05, 8).second != val);
  CHECK(split_validation(ptrs, 0.0, 7).second.empty());
}

TEST_CASE("training rejects an empty set and memorizes a small one") {
  const auto& spec = language();
  auto plan = corpus::SplitPlan::swahili_scaled();
  plan.unsup_cts = plan.unsup_bn = plan.eval_bn = 0;
  auto corpus = corpus::synth_corpus(spec, plan, 5);
  const auto& sup = corpus.split(corpus::Split::SupCts);
  std::vector<const corpus::Utterance*> train;
  for (size_t k = 0; k < sup.size() && k < 50; ++k) train.push_back(&sup[k]);
  REQUIRE(train.size() == 50);
  auto vocab = text::train_subwords(corpus::transcripts_of(sup), 200, spec.graphemes);

  Seq2SeqConfig cfg;
  CHECK_THROWS_AS(train_seq2seq({}, {}, vocab, cfg), Error);

  cfg.epochs = 150;
  cfg.batch_size = 4;
  cfg.spec_augment = SpecAugmentPolicy::none();
  Seq2SeqTrainReport report;
  auto model = train_seq2seq(train, train, vocab, cfg, &report);
  MESSAGE("memorization best training-set WER " << report.best_validation_wer << " at epoch " << report.best_epoch);
  eval::WERBreakdown total;
  for (const auto* u : train) total += eval::wer(*u->transcript, s2s_decode(model, u->features, {}).words);
  MESSAGE("memorization beam-4 WER " << total.wer_percent());
  CHECK(total.wer_percent() < 5.0);

  Seq2SeqConfig quick;
  quick.epochs = 2;
  std::vector<const corpus::Utterance*> few(train.begin(), train.begin() + 20), val(train.begin() + 20, train.end());
  Seq2SeqTrainReport r1, r2;
  auto m1 = train_seq2seq(few, val, vocab, quick, &r1);
  auto m2 = train_seq2seq(few, val, vocab, quick, &r2);
  CHECK(r1.best_validation_wer == r2.best_validation_wer);
  CHECK(r1.validation_wers == r2.validation_wers);
  for (size_t k = 0; k < m1.net().params().all().size(); ++k)
    CHECK(m1.net().params().all()[k]->value == m2.net().params().all()[k]->value);
}
