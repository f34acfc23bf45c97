#pragma once

#include "cdasr/common.hpp"
#include "cdasr/io.hpp"

#include <map>

namespace cdasr::text {

enum class LexiconTier { Base, Semisup, Expanded };

std::string to_string(LexiconTier t);
LexiconTier lexicon_tier_from_string(const std::string& s);

/// Graphemic lexicon: each word is pronounced as its spelling.
struct Lexicon {
  std::map<std::string, std::string> entries;
  LexiconTier tier = LexiconTier::Base;

  bool contains(const std::string& w) const { return entries.count(w) != 0; }
  size_t size() const { return entries.size(); }
  std::vector<std::string> words() const;

  /// One entry per line: word TAB space-separated graphemes.
  void save(const fs::path& path) const;
  static Lexicon load(const fs::path& path, LexiconTier tier);
};

/// Unique words across all source sentence lists. Callers pick sources per tier:
/// base = supervised transcripts; semisup = base + pseudotranscripts; expanded = semisup + external list.
Lexicon build_lexicon(const std::vector<std::vector<std::string>>& sources, LexiconTier tier);

}  // namespace cdasr::text
