#include "cdasr/modular/ctc.hpp"

#include "cdasr/nn/functional.hpp"

#include <cmath>

namespace cdasr::modular {

using nn::log_add;

Alphabet::Alphabet(std::string graphemes) : graphemes_(std::move(graphemes)) {}

int Alphabet::index(char grapheme) const {
  auto pos = graphemes_.find(grapheme);
  return pos == std::string::npos ? -1 : static_cast<int>(pos) + 2;
}

char Alphabet::symbol(int label) const {
  if (label == kBlank) return '-';
  if (label == kBoundary) return '_';
  return graphemes_.at(label - 2);
}

std::vector<int> Alphabet::labels_for(const WordSeq& words) const {
  std::vector<int> out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(kBoundary);
    for (char ch : words[i]) {
      int k = index(ch);
      if (k < 0) throw Error(std::string("grapheme '") + ch + "' is not in the alphabet");
      out.push_back(k);
    }
  }
  return out;
}

bool Alphabet::spellable(const std::string& word) const {
  if (word.empty()) return false;
  for (char ch : word)
    if (index(ch) < 0) return false;
  return true;
}

WordSeq Alphabet::words_from(const std::vector<int>& labels) const {
  WordSeq out;
  std::string cur;
  for (int l : labels) {
    if (l == kBlank) continue;
    if (l == kBoundary) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += symbol(l);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int ctc_min_frames(const std::vector<int>& labels) {
  int n = static_cast<int>(labels.size());
  for (size_t i = 1; i < labels.size(); ++i) n += labels[i] == labels[i - 1];
  return n;
}

namespace {

// alpha/beta over the blank-interleaved label sequence, log domain, T x S
void ctc_tables(const Eigen::Ref<const MatrixXd>& lp, const std::vector<int>& ext, MatrixXd* alpha, MatrixXd* beta) {
  const auto T = lp.rows();
  const auto S = static_cast<Eigen::Index>(ext.size());
  auto skip_ok = [&](Eigen::Index s) { return s >= 2 && ext[s] != Alphabet::kBlank && ext[s] != ext[s - 2]; };
  if (alpha) {
    alpha->setConstant(T, S, kNegInf);
    (*alpha)(0, 0) = lp(0, ext[0]);
    if (S > 1) (*alpha)(0, 1) = lp(0, ext[1]);
    for (Eigen::Index t = 1; t < T; ++t)
      for (Eigen::Index s = 0; s < S; ++s) {
        double a = (*alpha)(t - 1, s);
        if (s >= 1) a = log_add(a, (*alpha)(t - 1, s - 1));
        if (skip_ok(s)) a = log_add(a, (*alpha)(t - 1, s - 2));
        (*alpha)(t, s) = a == kNegInf ? kNegInf : a + lp(t, ext[s]);
      }
  }
  if (beta) {
    beta->setConstant(T, S, kNegInf);
    (*beta)(T - 1, S - 1) = lp(T - 1, ext[S - 1]);
    if (S > 1) (*beta)(T - 1, S - 2) = lp(T - 1, ext[S - 2]);
    for (Eigen::Index t = T - 2; t >= 0; --t)
      for (Eigen::Index s = S - 1; s >= 0; --s) {
        double b = (*beta)(t + 1, s);
        if (s + 1 < S) b = log_add(b, (*beta)(t + 1, s + 1));
        if (s + 2 < S && skip_ok(s + 2)) b = log_add(b, (*beta)(t + 1, s + 2));
        (*beta)(t, s) = b == kNegInf ? kNegInf : b + lp(t, ext[s]);
      }
  }
}

std::vector<int> extend(const std::vector<int>& labels) {
  std::vector<int> ext{Alphabet::kBlank};
  for (int l : labels) {
    ext.push_back(l);
    ext.push_back(Alphabet::kBlank);
  }
  return ext;
}

}  // namespace

double ctc_forward_logprob_log(const Eigen::Ref<const MatrixXd>& log_posteriors, const std::vector<int>& labels) {
  const auto T = log_posteriors.rows();
  if (T == 0) return labels.empty() ? 0.0 : kNegInf;
  if (ctc_min_frames(labels) > T) return kNegInf;
  for (int l : labels)
    if (l <= Alphabet::kBlank || l >= log_posteriors.cols()) throw Error("ctc: label outside the alphabet");
  auto ext = extend(labels);
  MatrixXd alpha;
  ctc_tables(log_posteriors, ext, &alpha, nullptr);
  const auto S = static_cast<Eigen::Index>(ext.size());
  double lp = alpha(T - 1, S - 1);
  if (S > 1) lp = log_add(lp, alpha(T - 1, S - 2));
  return lp;
}

double ctc_forward_logprob(const Eigen::Ref<const MatrixXd>& posteriors, const std::vector<int>& labels) {
  MatrixXd logs = posteriors.array().log();
  return ctc_forward_logprob_log(logs, labels);
}

double ctc_loss_with_grad(const Eigen::Ref<const MatrixXd>& log_posteriors, const std::vector<int>& labels,
                          MatrixXd* grad_logits) {
  const auto T = log_posteriors.rows();
  if (T == 0 || ctc_min_frames(labels) > T) return std::numeric_limits<double>::infinity();
  auto ext = extend(labels);
  MatrixXd alpha, beta;
  ctc_tables(log_posteriors, ext, &alpha, grad_logits ? &beta : nullptr);
  const auto S = static_cast<Eigen::Index>(ext.size());
  double logp = alpha(T - 1, S - 1);
  if (S > 1) logp = log_add(logp, alpha(T - 1, S - 2));
  if (logp == kNegInf) return std::numeric_limits<double>::infinity();
  if (grad_logits) {
    const auto A = log_posteriors.cols();
    MatrixXd occupancy = MatrixXd::Constant(T, A, kNegInf);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index s = 0; s < S; ++s) {
        double ab = alpha(t, s) + beta(t, s);
        if (ab == kNegInf) continue;
        occupancy(t, ext[s]) = log_add(occupancy(t, ext[s]), ab - log_posteriors(t, ext[s]));
      }
    *grad_logits = log_posteriors.array().exp() - (occupancy.array() - logp).exp();
  }
  return -logp;
}

std::vector<int> ctc_greedy(const Eigen::Ref<const MatrixXd>& log_posteriors) {
  std::vector<int> out;
  int prev = -1;
  for (Eigen::Index t = 0; t < log_posteriors.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < log_posteriors.cols(); ++k)
      if (log_posteriors(t, k) > log_posteriors(t, best)) best = k;
    int label = static_cast<int>(best);
    if (label != Alphabet::kBlank && label != prev) out.push_back(label);
    prev = label;
  }
  return out;
}

}  // namespace cdasr::modular
