#include "cdasr/eval/wer.hpp"

#include <cmath>

namespace cdasr::eval {

double WERBreakdown::wer_percent() const {
  if (ref_len <= 0) throw Error("WER undefined for an empty reference");
  return 100.0 * double(edits()) / double(ref_len);
}

WERBreakdown& WERBreakdown::operator+=(const WERBreakdown& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_len += o.ref_len;
  return *this;
}

WERBreakdown wer(const WordSeq& ref, const WordSeq& hyp) {
  if (ref.empty()) throw Error("wer: empty reference");
  const size_t R = ref.size(), H = hyp.size();
  // (edits, -substitutions), compared lexicographically
  using Score = std::pair<int, int>;
  std::vector<std::vector<Score>> best(R + 1, std::vector<Score>(H + 1));
  for (size_t i = 0; i <= R; ++i) best[i][0] = {static_cast<int>(i), 0};
  for (size_t j = 0; j <= H; ++j) best[0][j] = {static_cast<int>(j), 0};
  for (size_t i = 1; i <= R; ++i)
    for (size_t j = 1; j <= H; ++j) {
      const int sub = ref[i - 1] != hyp[j - 1];
      Score diag{best[i - 1][j - 1].first + sub, best[i - 1][j - 1].second - sub};
      Score del{best[i - 1][j].first + 1, best[i - 1][j].second};
      Score ins{best[i][j - 1].first + 1, best[i][j - 1].second};
      best[i][j] = std::min({diag, del, ins});
    }

  const auto [edits, neg_subs] = best[R][H];
  WERBreakdown out;
  out.ref_len = static_cast<long>(R);
  out.substitutions = -neg_subs;
  // deletions - insertions = R - H for every alignment
  out.deletions = (edits - out.substitutions + long(R) - long(H)) / 2;
  out.insertions = edits - out.substitutions - out.deletions;
  return out;
}

EvalScore score_eval(const std::map<std::string, WordSeq>& hypotheses, const std::vector<corpus::Utterance>& eval) {
  EvalScore score;
  std::string missing;
  for (const auto& u : eval) {
    auto it = hypotheses.find(u.utt_id);
    if (it == hypotheses.end()) {
      missing += (missing.empty() ? "" : ", ") + u.utt_id;
      continue;
    }
    if (!u.transcript) throw Error("score_eval: eval utterance " + u.utt_id + " has no reference");
    auto subset = u.eval_subset.value_or(corpus::EvalSubset::News);
    score.subsets[subset] += wer(*u.transcript, it->second);
  }
  if (!missing.empty()) throw Error("score_eval: missing hypotheses for " + missing);
  if (score.subsets.empty()) throw Error("score_eval: no eval utterances");
  double sum = 0;
  for (const auto& [_, b] : score.subsets) sum += b.wer_percent();
  score.average = sum / double(score.subsets.size());
  return score;
}

double round1(double x) {
  // scaled values like 667.4999999 arise from binary fractions; nudge by a relative epsilon
  double scaled = x * 10.0;
  double nudged = scaled + std::copysign(1e-9 * std::max(1.0, std::abs(scaled)), scaled);
  return std::copysign(std::floor(std::abs(nudged) + 0.5), x) / 10.0;
}

double average_across(const std::vector<double>& values) {
  if (values.empty()) throw Error("average_across: empty list");
  double sum = 0;
  for (double v : values) sum += v;
  return round1(sum / double(values.size()));
}

}  // namespace cdasr::eval
