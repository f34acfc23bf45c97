#pragma once

#include "cdasr/common.hpp"
#include "cdasr/io.hpp"

#include <unordered_map>

namespace cdasr::text {

inline const std::string kBos = "<s>";
inline const std::string kEos = "</s>";
inline const std::string kUnk = "<unk>";
/// Word-boundary unit: every word after the first is led by it.
inline const std::string kBoundaryUnit = "_";
inline constexpr int kNumSpecialUnits = 4;

/// Byte-pair subword inventory. Unit order: <s>, </s>, <unk>, _, graphemes (sorted), merged units.
class SubwordVocab {
 public:
  SubwordVocab() = default;
  SubwordVocab(std::vector<std::string> units, std::vector<std::pair<std::string, std::string>> merges,
               int target_size);

  const std::vector<std::string>& units() const { return units_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  int target_size() const { return target_size_; }
  int size() const { return static_cast<int>(units_.size()); }

  int id(const std::string& unit) const;  // -1 when absent
  const std::string& unit(int id) const { return units_.at(id); }
  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }
  int boundary() const { return 3; }
  bool is_special(int id) const { return id < 3; }

  /// Rank of the merge (left, right), or -1.
  int merge_rank(const std::string& left, const std::string& right) const;

  json to_json() const;
  static SubwordVocab from_json(const json& j);
  void save(const fs::path& path) const;
  static SubwordVocab load(const fs::path& path);
  std::string fingerprint() const;

 private:
  std::vector<std::string> units_;
  std::vector<std::pair<std::string, std::string>> merges_;
  int target_size_ = 0;
  std::unordered_map<std::string, int> index_;
  std::unordered_map<std::string, int> merge_index_;
};

/// Greedy BPE. Merges happen within words; each step takes the most frequent adjacent pair
/// (ties: lexicographically smallest pair) until the unit count reaches `target_size` or no
/// adjacent pair remains.
SubwordVocab train_subwords(const std::vector<std::string>& sentences, int target_size,
                            const std::string& extra_graphemes = "");

std::vector<int> encode(const SubwordVocab& vocab, const std::string& sentence);
std::vector<std::string> encode_units(const SubwordVocab& vocab, const std::string& sentence);
std::string decode(const SubwordVocab& vocab, const std::vector<int>& ids);
WordSeq decode_words(const SubwordVocab& vocab, const std::vector<int>& ids);

}  // namespace cdasr::text
