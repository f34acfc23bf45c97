#include "cdasr/text/subword.hpp"

#include "cdasr/hash.hpp"

#include <climits>
#include <map>
#include <set>

namespace cdasr::text {

SubwordVocab::SubwordVocab(std::vector<std::string> units, std::vector<std::pair<std::string, std::string>> merges,
                           int target_size)
    : units_(std::move(units)), merges_(std::move(merges)), target_size_(target_size) {
  if (units_.size() < kNumSpecialUnits || units_[0] != kBos || units_[1] != kEos || units_[2] != kUnk ||
      units_[3] != kBoundaryUnit)
    throw Error("subword vocab must start with <s>, </s>, <unk>, _");
  for (size_t k = 0; k < units_.size(); ++k) index_[units_[k]] = static_cast<int>(k);
  for (size_t k = 0; k < merges_.size(); ++k) {
    auto key = merges_[k].first + '\x1f' + merges_[k].second;
    merge_index_.emplace(key, static_cast<int>(k));
  }
}

int SubwordVocab::id(const std::string& unit) const {
  auto it = index_.find(unit);
  return it == index_.end() ? -1 : it->second;
}

int SubwordVocab::merge_rank(const std::string& left, const std::string& right) const {
  auto it = merge_index_.find(left + '\x1f' + right);
  return it == merge_index_.end() ? -1 : it->second;
}

json SubwordVocab::to_json() const {
  json merges = json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  return {{"units", units_}, {"merges", merges}, {"target_size", target_size_}};
}

SubwordVocab SubwordVocab::from_json(const json& j) {
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  return SubwordVocab(j.at("units").get<std::vector<std::string>>(), std::move(merges), j.at("target_size").get<int>());
}

void SubwordVocab::save(const fs::path& path) const { write_file_atomic(path, to_json().dump(1) + "\n"); }

SubwordVocab SubwordVocab::load(const fs::path& path) { return from_json(read_json(path)); }

std::string SubwordVocab::fingerprint() const { return sha256_hex(to_json().dump()); }

SubwordVocab train_subwords(const std::vector<std::string>& sentences, int target_size,
                            const std::string& extra_graphemes) {
  if (sentences.empty()) throw Error("train_subwords: empty corpus");
  std::map<std::string, long long> word_freq;
  std::set<char> graphemes(extra_graphemes.begin(), extra_graphemes.end());
  for (const auto& s : sentences)
    for (const auto& w : split_words(s)) {
      ++word_freq[w];
      graphemes.insert(w.begin(), w.end());
    }
  graphemes.erase(kBoundaryUnit[0]);

  std::vector<std::string> units{kBos, kEos, kUnk, kBoundaryUnit};
  for (char g : graphemes) units.emplace_back(1, g);
  const int minimum = static_cast<int>(units.size());
  if (target_size < minimum)
    throw Error("train_subwords: target_size " + std::to_string(target_size) + " below minimum " +
                std::to_string(minimum));

  std::set<std::string> known(units.begin(), units.end());
  std::vector<std::pair<std::vector<std::string>, long long>> words;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> syms;
    for (char ch : w) syms.emplace_back(1, ch);
    words.emplace_back(std::move(syms), f);
  }

  std::vector<std::pair<std::string, std::string>> merges;
  while (static_cast<int>(units.size()) < target_size) {
    std::map<std::pair<std::string, std::string>, long long> pair_counts;
    for (const auto& [syms, f] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i) pair_counts[{syms[i], syms[i + 1]}] += f;
    if (pair_counts.empty()) break;
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [left, right] = best->first;
    merges.emplace_back(left, right);
    std::string merged = left + right;
    if (known.insert(merged).second) units.push_back(merged);
    for (auto& [syms, f] : words) {
      std::vector<std::string> next;
      for (size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
  }
  return SubwordVocab(std::move(units), std::move(merges), target_size);
}

namespace {

std::vector<std::string> encode_word(const SubwordVocab& vocab, const std::string& word) {
  std::vector<std::string> syms;
  for (char ch : word) {
    std::string s(1, ch);
    syms.push_back(vocab.id(s) >= 0 && s != kBoundaryUnit ? s : kUnk);
  }
  while (syms.size() > 1) {
    int best_rank = INT_MAX;
    size_t best_at = 0;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      int r = vocab.merge_rank(syms[i], syms[i + 1]);
      if (r >= 0 && r < best_rank) {
        best_rank = r;
        best_at = i;
      }
    }
    if (best_rank == INT_MAX) break;
    const auto [left, right] = vocab.merges()[best_rank];
    std::vector<std::string> next;
    for (size_t i = 0; i < syms.size(); ++i) {
      if (i >= best_at && i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
        next.push_back(left + right);
        ++i;
      } else {
        next.push_back(syms[i]);
      }
    }
    syms = std::move(next);
  }
  return syms;
}

}  // namespace

std::vector<std::string> encode_units(const SubwordVocab& vocab, const std::string& sentence) {
  std::vector<std::string> out;
  auto words = split_words(sentence);
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(kBoundaryUnit);
    for (auto& s : encode_word(vocab, words[i])) out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> encode(const SubwordVocab& vocab, const std::string& sentence) {
  std::vector<int> ids;
  for (const auto& u : encode_units(vocab, sentence)) {
    int id = vocab.id(u);
    ids.push_back(id >= 0 ? id : vocab.unk());
  }
  return ids;
}

std::string decode(const SubwordVocab& vocab, const std::vector<int>& ids) {
  std::string raw;
  for (int id : ids) {
    if (id == vocab.bos() || id == vocab.eos()) continue;
    if (id == vocab.boundary())
      raw += ' ';
    else
      raw += vocab.unit(id);
  }
  return join_words(split_words(raw));
}

WordSeq decode_words(const SubwordVocab& vocab, const std::vector<int>& ids) {
  return split_words(decode(vocab, ids));
}

}  // namespace cdasr::text
