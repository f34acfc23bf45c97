#include "cdasr/corpus/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace cdasr::corpus {

std::string to_string(Split s) {
  switch (s) {
    case Split::SupCts: return "sup_cts";
    case Split::UnsupCts: return "unsup_cts";
    case Split::UnsupBn: return "unsup_bn";
    case Split::EvalBn: return "eval_bn";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  for (Split sp : kAllSplits)
    if (to_string(sp) == s) return sp;
  throw Error("unknown split '" + s + "'");
}

double SplitPlan::budget(Split s) const {
  switch (s) {
    case Split::SupCts: return sup_cts;
    case Split::UnsupCts: return unsup_cts;
    case Split::UnsupBn: return unsup_bn;
    case Split::EvalBn: return eval_bn;
  }
  return 0;
}

SplitPlan SplitPlan::swahili_scaled(double frames_per_hour, double eval_scale) {
  SplitPlan p;
  p.sup_cts = 68.3 * frames_per_hour;
  p.unsup_cts = 57.6 * frames_per_hour;
  p.unsup_bn = 149.0 * frames_per_hour;
  p.eval_bn = 5.3 * frames_per_hour * eval_scale;
  return p;
}

SplitPlan SplitPlan::from_json(const json& j) {
  SplitPlan p = swahili_scaled(j.value("frames_per_hour", 1500.0), j.value("eval_scale", 4.0));
  p.sup_cts = j.value("sup_cts", p.sup_cts);
  p.unsup_cts = j.value("unsup_cts", p.unsup_cts);
  p.unsup_bn = j.value("unsup_bn", p.unsup_bn);
  p.eval_bn = j.value("eval_bn", p.eval_bn);
  p.set1_ratio = j.value("set1_ratio", p.set1_ratio);
  p.set2_ratio = j.value("set2_ratio", p.set2_ratio);
  p.set2_cts_fraction = j.value("set2_cts_fraction", p.set2_cts_fraction);
  return p;
}

json SplitPlan::to_json() const {
  return {{"sup_cts", sup_cts},       {"unsup_cts", unsup_cts},   {"unsup_bn", unsup_bn},
          {"eval_bn", eval_bn},       {"set1_ratio", set1_ratio}, {"set2_ratio", set2_ratio},
          {"set2_cts_fraction", set2_cts_fraction}};
}

long long CorpusManifest::total_frames(Split s) const {
  long long n = 0;
  for (const auto& u : split(s)) n += u.num_frames();
  return n;
}

std::vector<std::string> transcripts_of(const std::vector<Utterance>& utts) {
  std::vector<std::string> out;
  for (const auto& u : utts)
    if (u.transcript) out.push_back(join_words(*u.transcript));
  return out;
}

namespace {

Domain domain_of(Split s) { return (s == Split::SupCts || s == Split::UnsupCts) ? Domain::CTS : Domain::BN; }

std::vector<std::string> sample_text(const LanguageSpec& spec, double words, double cts_fraction, uint64_t seed) {
  std::vector<std::string> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  long long have = 0;
  for (uint64_t k = 0; have < words; ++k) {
    Domain d = u01(rng) < cts_fraction ? Domain::CTS : Domain::BN;
    auto sent = sample_sentence(spec, d, std::nullopt, mix_seed(seed, k));
    have += static_cast<long long>(sent.size());
    out.push_back(join_words(sent));
  }
  return out;
}

}  // namespace

CorpusManifest synth_corpus(const LanguageSpec& spec, const SplitPlan& plan, uint64_t seed) {
  if (plan.sup_cts <= 0) throw Error("synth_corpus: supervised split has a zero frame budget");
  for (Split s : kAllSplits)
    if (plan.budget(s) < 0) throw Error("synth_corpus: negative budget for " + to_string(s));

  CorpusManifest m;
  m.language_spec_ref = spec.identifier();
  for (Split s : kAllSplits) {
    const double budget = plan.budget(s);
    const Domain domain = domain_of(s);
    auto& utts = m.splits[s];
    long long total = 0;
    for (uint64_t idx = 0; total < budget; ++idx) {
      std::optional<EvalSubset> subset;
      if (s == Split::EvalBn) subset = idx % 2 == 0 ? EvalSubset::News : EvalSubset::Topical;
      const uint64_t base = mix_seed(seed, static_cast<uint64_t>(s) * 1000003ULL + idx);
      Utterance u;
      for (uint64_t attempt = 0;; ++attempt) {
        if (attempt > 1000) throw Error("synth_corpus: cannot sample an utterance within max_frames");
        auto words = sample_sentence(spec, domain, subset, mix_seed(base, 2 * attempt));
        auto feats = render_features(words, domain, spec, mix_seed(base, 2 * attempt + 1));
        if (feats.rows() > spec.config.max_frames) continue;
        u.features = std::move(feats);
        u.transcript = std::move(words);
        break;
      }
      char id[64];
      std::snprintf(id, sizeof(id), "%s-%06llu", to_string(s).c_str(), static_cast<unsigned long long>(idx));
      u.utt_id = id;
      u.domain = domain;
      u.split = s;
      u.eval_subset = subset;
      if (s == Split::UnsupCts || s == Split::UnsupBn) {
        m.unsup_truth[u.utt_id] = *u.transcript;
        u.transcript.reset();
      }
      total += u.num_frames();
      utts.push_back(std::move(u));
    }
    // keep whichever of (with last, without last) lands closer to the budget
    if (utts.size() > 1) {
      long long last = utts.back().num_frames();
      if (double(total) - budget > budget - double(total - last)) {
        m.unsup_truth.erase(utts.back().utt_id);
        utts.pop_back();
      }
    }
  }

  long long sup_words = 0;
  for (const auto& u : m.split(Split::SupCts)) sup_words += static_cast<long long>(u.transcript->size());
  m.text_sets["set1"] = sample_text(spec, plan.set1_ratio * sup_words, 0.0, mix_seed(seed, 0x5e71));
  m.text_sets["set2"] = sample_text(spec, plan.set2_ratio * sup_words, plan.set2_cts_fraction, mix_seed(seed, 0x5e72));
  return m;
}

json utterance_manifest_line(const Utterance& u, const std::string& feature_file) {
  json j = {{"utt_id", u.utt_id},
            {"domain", to_string(u.domain)},
            {"split", to_string(u.split)},
            {"num_frames", u.num_frames()},
            {"feature_file", feature_file}};
  if (u.eval_subset) j["eval_subset"] = to_string(*u.eval_subset);
  if (u.transcript) j["transcript"] = join_words(*u.transcript);
  return j;
}

void write_corpus(const CorpusManifest& corpus, const fs::path& dir) {
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "text");
  std::string manifest;
  for (Split s : kAllSplits) {
    auto it = corpus.splits.find(s);
    if (it == corpus.splits.end()) continue;
    for (const auto& u : it->second) {
      std::string rel = "features/" + u.utt_id + ".cdaf";
      write_features(dir / rel, u.features);
      manifest += utterance_manifest_line(u, rel).dump() + "\n";
    }
  }
  write_file_atomic(dir / "manifest.jsonl", manifest);
  for (const auto& [name, sents] : corpus.text_sets) {
    std::string text;
    for (const auto& s : sents) text += s + "\n";
    write_file_atomic(dir / "text" / (name + ".txt"), text);
  }
  std::string truth;
  for (const auto& [id, words] : corpus.unsup_truth) truth += json({{"utt_id", id}, {"transcript", join_words(words)}}).dump() + "\n";
  write_file_atomic(dir / "unsup_truth.jsonl", truth);
  write_file_atomic(dir / "meta.json", json({{"language_spec_ref", corpus.language_spec_ref}}).dump(2) + "\n");
}

CorpusManifest read_corpus(const fs::path& dir) {
  CorpusManifest m;
  for (Split s : kAllSplits) m.splits[s];
  for (const auto& line : read_lines(dir / "manifest.jsonl")) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Utterance u;
    u.utt_id = j.at("utt_id").get<std::string>();
    u.domain = domain_from_string(j.at("domain").get<std::string>());
    u.split = split_from_string(j.at("split").get<std::string>());
    if (j.contains("eval_subset")) u.eval_subset = eval_subset_from_string(j["eval_subset"].get<std::string>());
    if (j.contains("transcript")) u.transcript = split_words(j["transcript"].get<std::string>());
    u.features = read_features(dir / j.at("feature_file").get<std::string>());
    if (u.num_frames() != j.at("num_frames").get<int>()) throw Error("frame count mismatch for " + u.utt_id);
    m.splits[u.split].push_back(std::move(u));
  }
  for (const auto& entry : fs::directory_iterator(dir / "text")) {
    if (entry.path().extension() != ".txt") continue;
    auto lines = read_lines(entry.path());
    std::erase_if(lines, [](const std::string& l) { return l.empty(); });
    m.text_sets[entry.path().stem().string()] = lines;
  }
  if (fs::exists(dir / "unsup_truth.jsonl"))
    for (const auto& line : read_lines(dir / "unsup_truth.jsonl")) {
      if (line.empty()) continue;
      json j = json::parse(line);
      m.unsup_truth[j.at("utt_id").get<std::string>()] = split_words(j.at("transcript").get<std::string>());
    }
  m.language_spec_ref = read_json(dir / "meta.json").value("language_spec_ref", "");
  return m;
}

}  // namespace cdasr::corpus
