#include "c2t/beam.hpp"

#include "c2t/transformer.hpp"

#include <algorithm>
#include <cmath>

namespace c2t::decode {

using model::kEos;
using model::kSos;

TransformerScorer::TransformerScorer(const model::Transformer& model, const nn::Matrix& features)
    : model_(model) {
  nn::NoGradGuard guard;
  memory_ = model_.encode(features);
}

int TransformerScorer::vocab_size() const { return model_.config().vocab_size; }

std::vector<double> TransformerScorer::next_logprobs(std::span<const int> prefix) const {
  return model_.next_token_logprobs(prefix, memory_);
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw Error("decode: beam width must be >= 1");
  if (lm_weight < 0.0) throw Error("decode: lm weight must be >= 0");
  if (max_len < 1) throw Error("decode: max length must be >= 1");
}

namespace {

// Fused increment for every emittable token (index = token id; pad and sos unused).
std::vector<double> step_scores(const StepScorer& scorer, const lm::NgramLm* lm, double lm_weight,
                                std::span<const int> prefix) {
  std::vector<double> s = scorer.next_logprobs(prefix);
  if (static_cast<int>(s.size()) != scorer.vocab_size()) throw Error("decode: scorer returned wrong width");
  if (lm && lm_weight != 0.0) {
    for (int t = kEos; t < scorer.vocab_size(); ++t) s[static_cast<std::size_t>(t)] += lm_weight * lm->logprob(t, prefix);
  }
  return s;
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

double ranking_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize) return h.score;
  return h.score / static_cast<double>(std::max<std::size_t>(1, h.tokens.size() - 1));
}

bool better_final(const Hypothesis& a, const Hypothesis& b, bool length_normalize) {
  const double sa = ranking_score(a, length_normalize), sb = ranking_score(b, length_normalize);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

DecodeResult to_result(const Hypothesis& h, bool truncated) {
  DecodeResult r;
  r.tokens = h.tokens;
  r.score = h.score;
  r.truncated = truncated;
  for (int t : h.tokens) {
    if (t != kSos && t != kEos) r.words.push_back(t);
  }
  return r;
}

void check_lm(const StepScorer& scorer, const lm::NgramLm* lm) {
  if (lm && lm->vocab_size() != scorer.vocab_size()) {
    throw Error("decode: language model and model vocabularies differ");
  }
}

}  // namespace

DecodeResult beam_search(const StepScorer& scorer, const lm::NgramLm* lm, const DecodeConfig& cfg) {
  cfg.validate();
  check_lm(scorer, lm);
  const int vocab = scorer.vocab_size();
  std::vector<Hypothesis> live{{{kSos}, 0.0, false}};
  std::vector<Hypothesis> finished;

  for (int step = 1; step <= cfg.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(vocab - kEos));
    for (const auto& h : live) {
      const auto inc = step_scores(scorer, lm, cfg.lm_weight, h.tokens);
      for (int t = kEos; t < vocab; ++t) {
        Hypothesis c;
        c.tokens = h.tokens;
        c.tokens.push_back(t);
        c.score = h.score + inc[static_cast<std::size_t>(t)];
        c.finished = t == kEos;
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(cfg.beam_width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);
    candidates.resize(keep);
    live.clear();
    for (auto& c : candidates) (c.finished ? finished : live).push_back(std::move(c));
  }

  if (!finished.empty()) {
    auto best = std::min_element(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
      return better_final(a, b, cfg.length_normalize);
    });
    return to_result(*best, false);
  }
  auto best = std::min_element(live.begin(), live.end(), better);
  return to_result(*best, true);
}

namespace {

struct Enumerator {
  const StepScorer& scorer;
  const lm::NgramLm* lm;
  double lm_weight;
  int max_len;
  bool length_normalize;
  bool have_best = false;
  Hypothesis best;

  void visit(std::vector<int>& prefix, double score) {
    const auto inc = step_scores(scorer, lm, lm_weight, prefix);
    Hypothesis done;
    done.tokens = prefix;
    done.tokens.push_back(kEos);
    done.score = score + inc[kEos];
    done.finished = true;
    if (!have_best || better_final(done, best, length_normalize)) {
      best = std::move(done);
      have_best = true;
    }
    const int emitted = static_cast<int>(prefix.size()) - 1;
    if (emitted + 1 >= max_len) return;
    for (int t = kEos + 1; t < scorer.vocab_size(); ++t) {
      prefix.push_back(t);
      visit(prefix, score + inc[static_cast<std::size_t>(t)]);
      prefix.pop_back();
    }
  }
};

}  // namespace

DecodeResult exhaustive_decode(const StepScorer& scorer, const lm::NgramLm* lm, double lm_weight, int max_len,
                               bool length_normalize) {
  if (max_len < 1) throw Error("exhaustive_decode: max length must be >= 1");
  check_lm(scorer, lm);
  const double words = static_cast<double>(scorer.vocab_size() - kEos - 1);
  double total = 0.0, power = 1.0;
  for (int k = 0; k < max_len; ++k) {
    total += power;
    power *= words;
  }
  if (total > 1e6) throw Error("exhaustive_decode: more than 1e6 sequences to enumerate");
  Enumerator e{scorer, lm, lm_weight, max_len, length_normalize, false, {}};
  std::vector<int> prefix{kSos};
  e.visit(prefix, 0.0);
  return to_result(e.best, false);
}

double rescore(const StepScorer& scorer, const lm::NgramLm* lm, double lm_weight, std::span<const int> tokens) {
  if (tokens.empty() || tokens[0] != kSos) throw Error("rescore: sequence must start with sos");
  double score = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto inc = step_scores(scorer, lm, lm_weight, tokens.first(i));
    score += inc[static_cast<std::size_t>(tokens[i])];
  }
  return score;
}

}  // namespace c2t::decode
