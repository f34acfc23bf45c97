#include "cdasr/text/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cdasr::text {

namespace {

constexpr double kLn10 = 2.302585092994045684;

struct HistoryStats {
  long long total = 0;
  long long distinct = 0;
};

}  // namespace

int NGramLM::id(const std::string& w) const {
  auto it = ids_.find(w);
  return it == ids_.end() ? -1 : it->second;
}

void NGramLM::index_vocab() {
  ids_.clear();
  for (size_t k = 0; k < vocab_.size(); ++k) ids_[vocab_[k]] = static_cast<int>(k);
  bos_ = id("<s>");
  eos_ = id("</s>");
  unk_ = id("<unk>");
  if (bos_ < 0 || eos_ < 0 || unk_ < 0) throw Error("n-gram vocabulary lacks <s>, </s> or <unk>");
}

double NGramLM::logprob_ids(int older, int prev, int word) const {
  if (prev == kNone) return unigrams_[word].logp;
  if (older != kNone) {
    auto t = trigrams_.find(key3(older, prev, word));
    if (t != trigrams_.end()) return t->second;
  }
  double backoff = 0;
  if (older != kNone) {
    auto h = bigrams_.find(key2(older, prev));
    if (h != bigrams_.end()) backoff = h->second.backoff;
  }
  auto b = bigrams_.find(key2(prev, word));
  if (b != bigrams_.end()) return backoff + b->second.logp;
  return backoff + unigrams_[prev].backoff + unigrams_[word].logp;
}

NGramLM train_ngram(const std::vector<WeightedText>& texts, double discount) {
  if (!(discount > 0.0 && discount < 1.0)) throw Error("train_ngram: discount must be in (0, 1)");
  std::vector<std::vector<std::string>> sentences;
  std::set<std::string> words;
  for (const auto& t : texts) {
    if (!t.sentences || t.duplication < 0) throw Error("train_ngram: invalid text source");
    for (int d = 0; d < t.duplication; ++d)
      for (const auto& s : *t.sentences) {
        sentences.push_back(split_words(s));
        words.insert(sentences.back().begin(), sentences.back().end());
      }
  }
  if (sentences.empty()) throw Error("train_ngram: no sentences");
  words.erase("<s>");
  words.erase("</s>");
  words.erase("<unk>");

  NGramLM lm;
  lm.discount_ = discount;
  lm.vocab_ = {"</s>", "<s>", "<unk>"};
  lm.vocab_.insert(lm.vocab_.end(), words.begin(), words.end());
  lm.index_vocab();
  const int V = lm.vocab_size();

  std::vector<long long> c1(V, 0);
  std::unordered_map<uint64_t, long long> c2, c3;
  for (const auto& s : sentences) {
    std::vector<int> tok{lm.bos_};
    for (const auto& w : s) tok.push_back(lm.id(w));
    tok.push_back(lm.eos_);
    for (size_t i = 1; i < tok.size(); ++i) {
      ++c1[tok[i]];
      ++c2[NGramLM::key2(tok[i - 1], tok[i])];
      if (i >= 2) ++c3[NGramLM::key3(tok[i - 2], tok[i - 1], tok[i])];
    }
  }
  const double D = discount;

  long long total = 0, distinct = 0;
  for (long long c : c1) {
    total += c;
    distinct += c > 0;
  }
  const int predictable = V - 1;  // everything but <s>
  lm.unigrams_.assign(V, {});
  for (int w = 0; w < V; ++w) {
    if (w == lm.bos_) {
      lm.unigrams_[w].logp = -99.0 * kLn10;
      continue;
    }
    double p = std::max(double(c1[w]) - D, 0.0) / double(total) + D * double(distinct) / double(total) / predictable;
    lm.unigrams_[w].logp = std::log(p);
  }

  std::unordered_map<int, HistoryStats> h1;
  for (const auto& [k, c] : c2) {
    auto& st = h1[int(k >> 21)];
    st.total += c;
    ++st.distinct;
  }
  std::unordered_map<uint64_t, HistoryStats> h2;
  for (const auto& [k, c] : c3) {
    auto& st = h2[k >> 21];
    st.total += c;
    ++st.distinct;
  }
  for (const auto& [v, st] : h1) lm.unigrams_[v].backoff = std::log(D * double(st.distinct) / double(st.total));

  for (const auto& [k, c] : c2) {
    int v = int(k >> 21), w = int(k & 0x1fffff);
    const auto& st = h1.at(v);
    double lower = std::exp(lm.unigrams_[w].logp);
    double p = (double(c) - D) / double(st.total) + D * double(st.distinct) / double(st.total) * lower;
    NGramLM::Entry e;
    e.logp = std::log(p);
    auto hs = h2.find(k);
    if (hs != h2.end()) e.backoff = std::log(D * double(hs->second.distinct) / double(hs->second.total));
    lm.bigrams_[k] = e;
  }
  for (const auto& [k, c] : c3) {
    int u = int(k >> 42), v = int((k >> 21) & 0x1fffff), w = int(k & 0x1fffff);
    const auto& st = h2.at(k >> 21);
    double lower = std::exp(lm.logprob_ids(NGramLM::kNone, v, w));
    double p = (double(c) - D) / double(st.total) + D * double(st.distinct) / double(st.total) * lower;
    lm.trigrams_[k] = std::log(p);
    (void)u;
  }

  for (int w = 0; w < V; ++w)
    if (c1[w]) lm.counts_[{w}] = c1[w];
  for (const auto& [k, c] : c2) lm.counts_[{int(k >> 21), int(k & 0x1fffff)}] = c;
  for (const auto& [k, c] : c3) lm.counts_[{int(k >> 42), int((k >> 21) & 0x1fffff), int(k & 0x1fffff)}] = c;
  return lm;
}

void NGramLM::write_arpa(std::ostream& out) const {
  // sorted by word strings so the file is byte-stable
  std::vector<int> order(vocab_.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return vocab_[a] < vocab_[b]; });

  std::vector<std::pair<std::string, const Entry*>> bi;
  for (const auto& [k, e] : bigrams_) bi.emplace_back(vocab_[k >> 21] + " " + vocab_[k & 0x1fffff], &e);
  std::sort(bi.begin(), bi.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::string, double>> tri;
  for (const auto& [k, lp] : trigrams_)
    tri.emplace_back(vocab_[k >> 42] + " " + vocab_[(k >> 21) & 0x1fffff] + " " + vocab_[k & 0x1fffff], lp);
  std::sort(tri.begin(), tri.end());

  char buf[64];
  auto fmt = [&](double ln) {
    std::snprintf(buf, sizeof(buf), "%.8f", ln / kLn10);
    return std::string(buf);
  };
  out << "\n\\data\\\n";
  out << "ngram 1=" << vocab_.size() << "\n";
  out << "ngram 2=" << bi.size() << "\n";
  out << "ngram 3=" << tri.size() << "\n\n";
  out << "\\1-grams:\n";
  for (int w : order) {
    out << (w == bos_ ? std::string("-99") : fmt(unigrams_[w].logp)) << '\t' << vocab_[w];
    if (unigrams_[w].backoff != 0) out << '\t' << fmt(unigrams_[w].backoff);
    out << '\n';
  }
  out << "\n\\2-grams:\n";
  for (const auto& [words, e] : bi) {
    out << fmt(e->logp) << '\t' << words;
    if (e->backoff != 0) out << '\t' << fmt(e->backoff);
    out << '\n';
  }
  out << "\n\\3-grams:\n";
  for (const auto& [words, lp] : tri) out << fmt(lp) << '\t' << words << '\n';
  out << "\n\\end\\\n";
}

void NGramLM::save_arpa(const fs::path& path) const {
  std::ostringstream ss;
  write_arpa(ss);
  write_file_atomic(path, ss.str());
}

NGramLM NGramLM::read_arpa(std::istream& in) {
  NGramLM lm;
  lm.discount_ = 0;
  std::string line;
  int section = 0;
  struct Row {
    double logp, backoff;
    std::vector<std::string> words;
  };
  std::vector<Row> rows[4];
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "\\data\\" || line.rfind("ngram ", 0) == 0) continue;
    if (line == "\\end\\") break;
    if (line.size() > 2 && line[0] == '\\' && line.find("-grams:") != std::string::npos) {
      section = line[1] - '0';
      if (section < 1 || section > 3) throw Error("unsupported ARPA order " + line);
      continue;
    }
    if (section == 0) continue;
    std::istringstream ls(line);
    Row r{};
    ls >> r.logp;
    for (int k = 0; k < section; ++k) {
      std::string w;
      if (!(ls >> w)) throw Error("malformed ARPA line: " + line);
      r.words.push_back(w);
    }
    if (!(ls >> r.backoff)) r.backoff = 0;
    rows[section].push_back(std::move(r));
  }
  for (const auto& r : rows[1]) lm.vocab_.push_back(r.words[0]);
  lm.index_vocab();
  lm.unigrams_.assign(lm.vocab_.size(), {});
  for (const auto& r : rows[1]) lm.unigrams_[lm.id(r.words[0])] = {r.logp * kLn10, r.backoff * kLn10};
  auto need = [&](const std::string& w) {
    int i = lm.id(w);
    if (i < 0) throw Error("ARPA n-gram uses unknown word " + w);
    return i;
  };
  for (const auto& r : rows[2])
    lm.bigrams_[key2(need(r.words[0]), need(r.words[1]))] = {r.logp * kLn10, r.backoff * kLn10};
  for (const auto& r : rows[3])
    lm.trigrams_[key3(need(r.words[0]), need(r.words[1]), need(r.words[2]))] = r.logp * kLn10;
  return lm;
}

NGramLM NGramLM::load_arpa(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_arpa(in);
}

double ngram_logprob(const NGramLM& lm, const WordSeq& history, const std::string& word, int oov_class_size) {
  auto to_id = [&](const std::string& w) {
    int i = lm.id(w);
    return i >= 0 ? i : lm.unk();
  };
  int older = NGramLM::kNone, prev = NGramLM::kNone;
  if (!history.empty()) prev = to_id(history.back());
  if (history.size() >= 2) older = to_id(history[history.size() - 2]);
  int w = lm.id(word);
  if (w >= 0) return lm.logprob_ids(older, prev, w);
  return lm.logprob_ids(older, prev, lm.unk()) - std::log(double(std::max(oov_class_size, 1)));
}

double ngram_sentence_logprob(const NGramLM& lm, const WordSeq& words, int oov_class_size) {
  WordSeq history{"<s>"};
  double total = 0;
  for (const auto& w : words) {
    total += ngram_logprob(lm, history, w, oov_class_size);
    history.push_back(w);
  }
  return total + ngram_logprob(lm, history, "</s>", oov_class_size);
}

}  // namespace cdasr::text
