#pragma once

#include "c2t/ngram.hpp"
#include "c2t/tensor.hpp"

#include <span>
#include <vector>

namespace c2t::model {
class Transformer;
}

namespace c2t::decode {

// Source of next-token log-probabilities for a prefix that starts with sos.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  virtual std::vector<double> next_logprobs(std::span<const int> prefix) const = 0;
};

// Wraps a trained model and one utterance's encoder memory.
class TransformerScorer : public StepScorer {
 public:
  TransformerScorer(const model::Transformer& model, const nn::Matrix& features);
  int vocab_size() const override;
  std::vector<double> next_logprobs(std::span<const int> prefix) const override;
  const nn::Tensor& memory() const { return memory_; }

 private:
  const model::Transformer& model_;
  nn::Tensor memory_;
};

struct DecodeConfig {
  int beam_width = 10;
  double lm_weight = 0.3;
  int max_len = 32;
  // Rank finished hypotheses by score per emitted token instead of total score.
  bool length_normalize = false;

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // starts with sos; ends with eos when finished
  double score = 0.0;       // sum of log P_model + lm_weight * log P_lm
  bool finished = false;
};

struct DecodeResult {
  std::vector<int> words;  // without sos/eos
  double score = 0.0;
  bool truncated = false;  // no hypothesis reached eos within max_len
  std::vector<int> tokens;
};

// Expands every live hypothesis over eos and all words, keeps the top
// beam_width by score (ties: lexicographically smaller token ids), moves
// hypotheses ending in eos to the finished pool, and stops when nothing is
// live or max_len tokens have been emitted.
DecodeResult beam_search(const StepScorer& scorer, const lm::NgramLm* lm, const DecodeConfig& cfg);

// Enumerates every word sequence of length < max_len followed by eos and
// returns the best under the same scoring and tie-break rules.
// Throws when more than 1e6 sequences would be enumerated.
DecodeResult exhaustive_decode(const StepScorer& scorer, const lm::NgramLm* lm, double lm_weight, int max_len,
                               bool length_normalize = false);

// Fused score of a complete token sequence (sos ... [eos]), recomputed step by step.
double rescore(const StepScorer& scorer, const lm::NgramLm* lm, double lm_weight, std::span<const int> tokens);

}  // namespace c2t::decode
