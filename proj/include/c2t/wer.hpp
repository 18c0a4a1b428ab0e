#pragma once

#include <span>
#include <string>
#include <vector>

namespace c2t::metrics {

struct WerResult {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_length = 0;

  int errors() const { return substitutions + deletions + insertions; }
  double wer() const { return static_cast<double>(errors()) / static_cast<double>(ref_length); }
};

// Minimum edit alignment with unit costs. Among equal-cost alignments the one
// with fewer substitutions, then fewer deletions, is reported.
WerResult wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);
WerResult wer(std::span<const int> reference, std::span<const int> hypothesis);

struct UtterancePair {
  std::string id;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
};

struct CorpusWer {
  WerResult pooled;                      // summed counts over utterances
  double macro_wer = 0.0;                // mean of per-utterance WERs
  std::vector<WerResult> per_utterance;

  double wer() const { return pooled.wer(); }
};

CorpusWer corpus_wer(std::span<const UtterancePair> pairs);

}  // namespace c2t::metrics
