#include "cdasr/text/lexicon.hpp"

#include <sstream>

namespace cdasr::text {

std::string to_string(LexiconTier t) {
  switch (t) {
    case LexiconTier::Base: return "base";
    case LexiconTier::Semisup: return "semisup";
    case LexiconTier::Expanded: return "expanded";
  }
  return "?";
}

LexiconTier lexicon_tier_from_string(const std::string& s) {
  if (s == "base") return LexiconTier::Base;
  if (s == "semisup") return LexiconTier::Semisup;
  if (s == "expanded") return LexiconTier::Expanded;
  throw Error("unknown lexicon tier '" + s + "'");
}

std::vector<std::string> Lexicon::words() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& [w, _] : entries) out.push_back(w);
  return out;
}

void Lexicon::save(const fs::path& path) const {
  std::string out;
  for (const auto& [w, spelling] : entries) {
    out += w;
    out += '\t';
    for (size_t i = 0; i < spelling.size(); ++i) {
      if (i) out += ' ';
      out += spelling[i];
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

Lexicon Lexicon::load(const fs::path& path, LexiconTier tier) {
  Lexicon lex;
  lex.tier = tier;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("malformed lexicon line: " + line);
    std::string spelling;
    for (const auto& g : split_words(line.substr(tab + 1))) spelling += g;
    lex.entries[line.substr(0, tab)] = spelling;
  }
  return lex;
}

Lexicon build_lexicon(const std::vector<std::vector<std::string>>& sources, LexiconTier tier) {
  Lexicon lex;
  lex.tier = tier;
  for (const auto& source : sources)
    for (const auto& sentence : source)
      for (const auto& w : split_words(sentence)) lex.entries.emplace(w, w);
  if (lex.entries.empty()) throw Error("build_lexicon: no words in sources");
  return lex;
}

}  // namespace cdasr::text
