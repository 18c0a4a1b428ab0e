#include "c2t/corpus.hpp"

#include "c2t/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace c2t::data {

using nn::Index;

Sentence tokenize(const std::string& text) {
  Sentence out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (std::isalnum(ch) || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return out;
}

std::string join(std::span<const std::string> words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sentence list " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    auto s = tokenize(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  if (out.empty()) throw Error("sentence list " + path.string() + " is empty");
  return out;
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < 3; ++i) {
    words_.emplace_back(kReserved[i]);
    ids_[words_.back()] = i;
  }
}

Vocabulary Vocabulary::build(std::span<const Sentence> transcripts) {
  if (transcripts.empty()) throw Error("build_vocab: empty corpus");
  std::set<std::string> unique;
  for (const auto& s : transcripts) unique.insert(s.begin(), s.end());
  Vocabulary v;
  for (const auto& w : unique) {
    if (v.ids_.count(w)) throw Error("build_vocab: corpus word collides with reserved token " + w);
    v.ids_[w] = static_cast<int>(v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end()) throw Error("word '" + word + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw Error("token id " + std::to_string(id) + " is out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    const int i = id(w);
    if (i < 3) throw Error("reserved token '" + w + "' inside a transcript");
    ids.push_back(i);
  }
  return ids;
}

Sentence Vocabulary::decode(std::span<const int> ids) const {
  Sentence out;
  for (int i : ids) {
    if (i >= 3) out.push_back(word(i));
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& w : words_) out << w << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  int index = 0;
  while (std::getline(in, line)) {
    if (index < 3) {
      if (line != kReserved[index]) throw Error("vocabulary file: reserved token mismatch");
    } else {
      if (line.empty() || v.ids_.count(line)) throw Error("vocabulary file: bad or duplicate word");
      v.ids_[line] = index;
      v.words_.push_back(line);
    }
    ++index;
  }
  if (index < 3) throw Error("vocabulary file: truncated");
  return v;
}

Split split(std::size_t n, const SplitSpec& spec) {
  if (n < 10) throw Error("split: corpus too small (need at least 10 utterances)");
  if (spec.train < 0 || spec.validation < 0 || spec.test < 0 ||
      std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-9) {
    throw Error("split: fractions must be non-negative and sum to 1");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.validation * static_cast<double>(n) + 1e-9));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

std::vector<Sentence> unique_sentences(std::span<const Sentence> transcripts) {
  std::vector<Sentence> out;
  std::set<Sentence> seen;
  for (const auto& s : transcripts) {
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

SubsetExperiment make_subset(std::span<const Sentence> transcripts, const Split& full, int k) {
  if (k < 1) throw Error("subset: k must be positive");
  const auto all = unique_sentences(transcripts);
  if (static_cast<std::size_t>(k) > all.size()) {
    throw Error("subset: corpus has only " + std::to_string(all.size()) + " unique sentences, " +
                std::to_string(k) + " requested");
  }
  SubsetExperiment e;
  e.k = k;
  e.sentences.assign(all.begin(), all.begin() + k);
  const std::set<Sentence> keep(e.sentences.begin(), e.sentences.end());
  auto restrict = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    for (auto i : idx) {
      if (keep.count(transcripts[i])) out.push_back(i);
    }
    return out;
  };
  e.split.train = restrict(full.train);
  e.split.validation = restrict(full.validation);
  e.split.test = restrict(full.test);

  std::set<Sentence> seen_sentences;
  std::set<std::string> words;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    if (!keep.count(transcripts[i])) continue;
    ++e.total_sentences;
    seen_sentences.insert(transcripts[i]);
    words.insert(transcripts[i].begin(), transcripts[i].end());
  }
  e.unique_sentences = seen_sentences.size();
  e.unique_words = words.size();
  return e;
}

WordSignature word_signature(const std::string& word, std::uint64_t seed, int min_ms, int max_ms) {
  if (min_ms < 1 || max_ms < min_ms) throw Error("word_signature: bad duration range");
  Rng rng(mix_seed(seed, fnv1a(word)));
  WordSignature s;
  for (int i = 0; i < 3; ++i) {
    s.frequencies[static_cast<std::size_t>(i)] = rng.uniform(1.0, 40.0);
    s.amplitudes[static_cast<std::size_t>(i)] = rng.uniform(0.5, 1.0);
    s.phases[static_cast<std::size_t>(i)] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  s.duration_ms = min_ms + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_ms - min_ms + 1)));
  return s;
}

std::vector<SyntheticUtterance> generate_synthetic(std::span<const Sentence> sentences, const SynthConfig& cfg) {
  if (sentences.empty()) throw Error("generate_synthetic: no sentences");
  if (cfg.repetitions < 1) throw Error("generate_synthetic: repetitions must be >= 1");
  const double fs = signal::kSampleRate;

  std::map<std::string, WordSignature> signatures;
  std::map<std::array<double, 3>, std::string> by_frequency;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      if (signatures.count(w)) continue;
      auto sig = word_signature(w, cfg.seed, cfg.min_word_ms, cfg.max_word_ms);
      auto [it, fresh] = by_frequency.emplace(sig.frequencies, w);
      if (!fresh) throw Error("generate_synthetic: words '" + w + "' and '" + it->second + "' share a signature");
      signatures.emplace(w, sig);
    }
  }

  // channel signature: gain and phase offset per channel
  Rng channel_rng(mix_seed(cfg.seed, 0xC4A77E1ULL));
  std::vector<double> gains(signal::kNumChannels), offsets(signal::kNumChannels);
  for (int c = 0; c < signal::kNumChannels; ++c) {
    gains[static_cast<std::size_t>(c)] = channel_rng.uniform(0.5, 1.5);
    offsets[static_cast<std::size_t>(c)] = channel_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  const Index pad = static_cast<Index>(cfg.padding_ms * fs / 1000.0);
  const Index fade = static_cast<Index>(0.02 * fs);
  std::vector<SyntheticUtterance> out;
  std::size_t index = 0;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const auto& sentence = sentences[si];
    if (sentence.empty()) throw Error("generate_synthetic: empty sentence");
    Index length = 2 * pad;
    for (const auto& w : sentence) length += static_cast<Index>(signatures.at(w).duration_ms * fs / 1000.0);
    for (int rep = 0; rep < cfg.repetitions; ++rep, ++index) {
      SyntheticUtterance u;
      u.sentence_index = si;
      u.seed = mix_seed(cfg.seed, 1000 + index);
      auto& rec = u.recording;
      char id[32];
      std::snprintf(id, sizeof(id), "utt_%04zu", index);
      rec.id = id;
      rec.sample_rate = fs;
      rec.channels = signal::default_channel_labels();
      rec.transcript = sentence;
      rec.samples = nn::Matrix::Zero(signal::kNumChannels, length);

      Index at = pad;
      for (const auto& w : sentence) {
        const auto& sig = signatures.at(w);
        const Index n = static_cast<Index>(sig.duration_ms * fs / 1000.0);
        for (Index t = 0; t < n; ++t) {
          double taper = 1.0;
          if (t < fade) taper = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(t) / fade);
          if (n - 1 - t < fade) {
            taper *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - t) / fade);
          }
          const double tau = static_cast<double>(t) / fs;
          for (int c = 0; c < signal::kNumChannels; ++c) {
            double v = 0.0;
            for (int i = 0; i < 3; ++i) {
              v += sig.amplitudes[static_cast<std::size_t>(i)] *
                   std::sin(2.0 * std::numbers::pi * sig.frequencies[static_cast<std::size_t>(i)] * tau +
                            sig.phases[static_cast<std::size_t>(i)] + offsets[static_cast<std::size_t>(c)] * (i + 1));
            }
            rec.samples(c, at + t) = cfg.amplitude_uv * gains[static_cast<std::size_t>(c)] * taper * v;
          }
        }
        at += n;
      }
      if (cfg.noise_level > 0.0) {
        Rng noise(u.seed);
        const double sd = cfg.noise_level * cfg.amplitude_uv;
        for (Index i = 0; i < rec.samples.size(); ++i) rec.samples.data()[i] += sd * noise.normal();
      }
      out.push_back(std::move(u));
    }
  }
  return out;
}

void write_recording(std::ostream& out, const signal::EegRecording& rec) {
  out << "C2TEEG 1\n";
  out << "id " << rec.id << '\n';
  out << "sample_rate " << static_cast<long>(rec.sample_rate) << '\n';
  out << "channels " << rec.samples.rows() << '\n';
  out << "labels";
  for (const auto& l : rec.channels) out << ' ' << l;
  out << '\n';
  out << "samples " << rec.samples.cols() << '\n';
  out << "transcript " << join(rec.transcript) << '\n';
  out << "data\n";
  for (Index i = 0; i < rec.samples.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(rec.samples.data()[i]));
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
  if (!out) throw Error("recording: write failed");
}

signal::EegRecording read_recording(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "C2TEEG 1") throw Error("recording: bad header");
  signal::EegRecording rec;
  Index channels = -1, samples = -1;
  while (std::getline(in, line) && line != "data") {
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string val = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "id") rec.id = val;
    else if (key == "sample_rate") rec.sample_rate = std::stod(val);
    else if (key == "channels") channels = std::stol(val);
    else if (key == "labels") {
      std::istringstream ls(val);
      std::string l;
      while (ls >> l) rec.channels.push_back(l);
    } else if (key == "samples") samples = std::stol(val);
    else if (key == "transcript") rec.transcript = tokenize(val);
  }
  if (line != "data" || channels < 1 || samples < 0) throw Error("recording: incomplete header");
  if (static_cast<Index>(rec.channels.size()) != channels) throw Error("recording: label count mismatch");
  rec.samples.resize(channels, samples);
  for (Index i = 0; i < rec.samples.size(); ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("recording: truncated sample data");
    const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                               (std::uint32_t(b[3]) << 24);
    rec.samples.data()[i] = std::bit_cast<float>(bits);
  }
  return rec;
}

void save_recording(const std::filesystem::path& path, const signal::EegRecording& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_recording(out, rec);
}

signal::EegRecording load_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open recording " + path.string());
  return read_recording(in);
}

signal::EegRecording import_csv(const std::filesystem::path& csv, const std::filesystem::path& transcript,
                                const std::string& id, double sample_rate) {
  std::ifstream in(csv);
  if (!in) throw Error("cannot open " + csv.string());
  signal::EegRecording rec;
  rec.id = id.empty() ? csv.stem().string() : id;
  rec.sample_rate = sample_rate;
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: missing header row");
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.pop_back();
      rec.channels.push_back(cell);
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != rec.channels.size()) {
      throw Error("csv: row " + std::to_string(rows.size() + 2) + " has " + std::to_string(row.size()) +
                  " columns, expected " + std::to_string(rec.channels.size()));
    }
    rows.push_back(std::move(row));
  }
  rec.samples.resize(static_cast<Index>(rec.channels.size()), static_cast<Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < rows[t].size(); ++c) rec.samples(static_cast<Index>(c), static_cast<Index>(t)) = rows[t][c];
  }
  std::ifstream tin(transcript);
  if (!tin) throw Error("cannot open transcript " + transcript.string());
  std::getline(tin, line);
  rec.transcript = tokenize(line);
  return rec;
}

void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries) {
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["transcript"] = join(e.transcript);
    j["seed"] = e.seed;
    j["sentence_index"] = e.sentence_index;
    out << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(std::istream& in) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.transcript = tokenize(j.at("transcript").get<std::string>());
      e.seed = j.value("seed", std::uint64_t{0});
      e.sentence_index = j.value("sentence_index", std::size_t{0});
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace c2t::data
