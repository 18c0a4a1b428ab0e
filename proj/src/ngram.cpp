#include "c2t/ngram.hpp"

#include "c2t/tensor.hpp"
#include "c2t/transformer.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace c2t::lm {

using model::kEos;
using model::kSos;

NgramLm NgramLm::fit(std::span<const std::vector<int>> sentences, int vocab_size, int order, double alpha) {
  if (sentences.empty()) throw Error("fit_ngram: empty corpus");
  if (order < 1) throw Error("fit_ngram: order must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("fit_ngram: alpha must be in (0, 1]");
  if (vocab_size <= kEos) throw Error("fit_ngram: vocabulary holds no words");
  NgramLm lm;
  lm.order_ = order;
  lm.alpha_ = alpha;
  lm.vocab_size_ = vocab_size;
  lm.counts_.resize(static_cast<std::size_t>(order));
  for (const auto& s : sentences) {
    std::vector<int> padded{kSos};
    for (int w : s) {
      if (w <= kEos || w >= vocab_size) throw Error("fit_ngram: token id " + std::to_string(w) + " is not a word");
      padded.push_back(w);
    }
    padded.push_back(kEos);
    // every predicted position (all but the leading sos) with its contexts
    for (std::size_t i = 1; i < padded.size(); ++i) {
      for (int n = 1; n <= order && static_cast<std::size_t>(n) <= i + 1; ++n) {
        std::vector<int> gram(padded.begin() + static_cast<std::ptrdiff_t>(i + 1 - n),
                              padded.begin() + static_cast<std::ptrdiff_t>(i + 1));
        ++lm.counts_[static_cast<std::size_t>(n - 1)][gram];
      }
      ++lm.unigram_total_;
    }
  }
  lm.rebuild_contexts();
  return lm;
}

void NgramLm::rebuild_contexts() {
  contexts_.assign(static_cast<std::size_t>(order_), {});
  for (int n = 2; n <= order_; ++n) {
    for (const auto& [gram, c] : counts_[static_cast<std::size_t>(n - 1)]) {
      std::vector<int> ctx(gram.begin(), gram.end() - 1);
      contexts_[static_cast<std::size_t>(n - 2)][ctx] += c;
    }
  }
}

std::uint64_t NgramLm::count(std::span<const int> ngram) const {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return 0;
  const auto& table = counts_[ngram.size() - 1];
  auto it = table.find(std::vector<int>(ngram.begin(), ngram.end()));
  return it == table.end() ? 0 : it->second;
}

double NgramLm::logprob(int word, std::span<const int> history) const {
  if (word < kEos || word >= vocab_size_) {
    throw Error("lm_logprob: token id " + std::to_string(word) + " is outside the vocabulary");
  }
  const std::size_t usable = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
  const auto hist = history.subspan(history.size() - usable);
  double penalty = 1.0;
  std::vector<int> key;
  for (std::size_t k = usable; k >= 1; --k) {
    const auto ctx = hist.subspan(usable - k);
    key.assign(ctx.begin(), ctx.end());
    auto cit = contexts_[k - 1].find(key);
    if (cit != contexts_[k - 1].end()) {
      key.push_back(word);
      const auto& table = counts_[k];
      auto git = table.find(key);
      if (git != table.end()) {
        return std::log(penalty * static_cast<double>(git->second) / static_cast<double>(cit->second));
      }
    }
    penalty *= alpha_;
  }
  const std::vector<int> uni{word};
  auto it = counts_[0].find(uni);
  const double c = it == counts_[0].end() ? 0.0 : static_cast<double>(it->second);
  const double predictable = static_cast<double>(vocab_size_ - kEos);  // eos + words
  return std::log(penalty * (c + 1.0) / (static_cast<double>(unigram_total_) + predictable));
}

void NgramLm::save(std::ostream& out) const {
  std::ostringstream a;
  a.precision(17);
  a << alpha_;
  out << "# c2t-ngram order=" << order_ << " alpha=" << a.str() << " vocab=" << vocab_size_
      << " tokens=" << unigram_total_ << '\n';
  for (int n = 1; n <= order_; ++n) {
    for (const auto& [gram, c] : counts_[static_cast<std::size_t>(n - 1)]) {
      out << n << '\t';
      for (std::size_t i = 0; i < gram.size(); ++i) out << (i ? " " : "") << gram[i];
      out << '\t' << c << '\n';
    }
  }
}

NgramLm NgramLm::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("# c2t-ngram", 0) != 0) {
    throw Error("ngram: missing header");
  }
  NgramLm lm;
  std::istringstream hs(header.substr(11));
  std::string field;
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "order") lm.order_ = std::stoi(val);
    else if (key == "alpha") lm.alpha_ = std::stod(val);
    else if (key == "vocab") lm.vocab_size_ = std::stoi(val);
    else if (key == "tokens") lm.unigram_total_ = std::stoull(val);
  }
  if (lm.order_ < 1) throw Error("ngram: bad order");
  lm.counts_.resize(static_cast<std::size_t>(lm.order_));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string n_s, ids, count_s;
    if (!std::getline(ls, n_s, '\t') || !std::getline(ls, ids, '\t') || !std::getline(ls, count_s)) {
      throw Error("ngram: malformed line '" + line + "'");
    }
    const int n = std::stoi(n_s);
    if (n < 1 || n > lm.order_) throw Error("ngram: n-gram order out of range");
    std::vector<int> gram;
    std::istringstream is(ids);
    int id;
    while (is >> id) gram.push_back(id);
    if (static_cast<int>(gram.size()) != n) throw Error("ngram: length mismatch in '" + line + "'");
    lm.counts_[static_cast<std::size_t>(n - 1)][gram] = std::stoull(count_s);
  }
  lm.rebuild_contexts();
  return lm;
}

}  // namespace c2t::lm
