#include "c2t/wer.hpp"

#include "c2t/tensor.hpp"

#include <tuple>

namespace c2t::metrics {

namespace {

struct Cell {
  int cost, subs, dels, ins;

  bool operator<(const Cell& o) const {
    return std::tie(cost, subs, dels) < std::tie(o.cost, o.subs, o.dels);
  }
};

// Lexicographic (cost, subs, dels) is compatible with adding per-step
// increments, so a cell-wise minimum is globally optimal.
template <class T>
WerResult align(std::span<const T> ref, std::span<const T> hyp) {
  if (ref.empty()) throw Error("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  thread_local std::vector<Cell> prev, cur;
  prev.resize(m + 1);
  cur.resize(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {int(j), 0, 0, int(j)};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {int(i), 0, int(i), 0};
    for (std::size_t j = 1; j <= m; ++j) {
      Cell best = prev[j - 1];
      if (!(ref[i - 1] == hyp[j - 1])) {
        best.cost += 1;
        best.subs += 1;
      }
      Cell del = prev[j];
      del.cost += 1;
      del.dels += 1;
      if (del < best) best = del;
      Cell ins = cur[j - 1];
      ins.cost += 1;
      ins.ins += 1;
      if (ins < best) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& c = prev[m];
  return {c.subs, c.dels, c.ins, static_cast<int>(n)};
}

}  // namespace

WerResult wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  return align(reference, hypothesis);
}

WerResult wer(std::span<const int> reference, std::span<const int> hypothesis) {
  return align(reference, hypothesis);
}

CorpusWer corpus_wer(std::span<const UtterancePair> pairs) {
  if (pairs.empty()) throw Error("corpus_wer: no utterances");
  CorpusWer out;
  double macro = 0.0;
  for (const auto& p : pairs) {
    WerResult r;
    try {
      r = wer(p.reference, p.hypothesis);
    } catch (const Error& e) {
      throw Error("utterance " + p.id + ": " + e.what());
    }
    out.pooled.substitutions += r.substitutions;
    out.pooled.deletions += r.deletions;
    out.pooled.insertions += r.insertions;
    out.pooled.ref_length += r.ref_length;
    macro += r.wer();
    out.per_utterance.push_back(r);
  }
  out.macro_wer = macro / static_cast<double>(pairs.size());
  return out;
}

}  // namespace c2t::metrics
