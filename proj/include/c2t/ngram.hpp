#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace c2t::lm {

// Word-level n-gram model scored with stupid backoff. Token ids follow the
// vocabulary convention (pad 0, sos 1, eos 2, words from 3). Sentences are
// padded with one leading sos and one trailing eos.
class NgramLm {
 public:
  NgramLm() = default;

  // `vocab_size` counts every id including the reserved ones; the unigram
  // floor is add-one smoothed over eos plus all words.
  static NgramLm fit(std::span<const std::vector<int>> sentences, int vocab_size, int order = 4,
                     double alpha = 0.4);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  int vocab_size() const { return vocab_size_; }

  // Score of `word` after `history` (any length; only the last order-1
  // tokens are used). Relative frequency of the longest seen context, times
  // alpha per backoff level, ending at the smoothed unigram. Throws for ids
  // that cannot be predicted (pad, sos, out of range).
  double logprob(int word, std::span<const int> history) const;

  // Raw count of an n-gram (1 <= length <= order).
  std::uint64_t count(std::span<const int> ngram) const;

  // Sorted text: header line, then "n<TAB>ids<TAB>count" per n-gram.
  void save(std::ostream& out) const;
  static NgramLm load(std::istream& in);

  bool operator==(const NgramLm& other) const = default;

 private:
  int order_ = 4;
  double alpha_ = 0.4;
  int vocab_size_ = 0;
  std::uint64_t unigram_total_ = 0;
  // counts_[n-1]: n-gram -> count; contexts_[n-1]: (n)-token context -> count of continuations
  std::vector<std::map<std::vector<int>, std::uint64_t>> counts_;
  std::vector<std::map<std::vector<int>, std::uint64_t>> contexts_;

  void rebuild_contexts();
};

}  // namespace c2t::lm
