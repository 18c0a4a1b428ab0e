#pragma once

#include "c2t/signal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace c2t::data {

using Sentence = std::vector<std::string>;

// Lowercases and splits on whitespace, dropping characters other than
// letters, digits and apostrophes.
Sentence tokenize(const std::string& text);
std::string join(std::span<const std::string> words);

// One sentence per non-empty line; lines starting with '#' are skipped.
std::vector<Sentence> read_sentences(const std::filesystem::path& path);

class Vocabulary {
 public:
  static constexpr const char* kReserved[3] = {"<pad>", "<sos>", "<eos>"};

  Vocabulary();
  // Words sorted lexicographically after the three reserved tokens.
  static Vocabulary build(std::span<const Sentence> transcripts);

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return ids_.count(word) != 0; }
  const std::string& word(int id) const;
  std::vector<int> encode(std::span<const std::string> words) const;
  // Reserved ids are skipped.
  Sentence decode(std::span<const int> ids) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train, validation, test;
};

// Seeded shuffle then contiguous partition: train = floor(0.8 n),
// validation = floor(0.1 n), test = the rest. Needs n >= 10.
Split split(std::size_t n, const SplitSpec& spec);

struct SubsetExperiment {
  int k = 0;                         // unique sentences requested
  std::vector<Sentence> sentences;   // the first k unique sentences
  Split split;                       // restricted to utterances of those sentences
  std::size_t total_sentences = 0;   // utterances in the subset
  std::size_t unique_sentences = 0;
  std::size_t unique_words = 0;
};

// Unique sentences in order of first appearance.
std::vector<Sentence> unique_sentences(std::span<const Sentence> transcripts);

SubsetExperiment make_subset(std::span<const Sentence> transcripts, const Split& full, int k);

// Unique-word counts of the reference tables, printed for comparison only.
inline constexpr int kReferenceSubsetSizes[6] = {5, 10, 15, 20, 25, 30};
inline constexpr int kReferenceUniqueWords[6] = {29, 59, 84, 106, 132, 153};

struct SynthConfig {
  int repetitions = 3;
  std::uint64_t seed = 0;
  double noise_level = 0.5;     // white-noise std relative to the oscillation amplitude
  double amplitude_uv = 10.0;
  int min_word_ms = 300;
  int max_word_ms = 600;
  int padding_ms = 100;         // quiet lead-in and tail
};

// Word-specific deterministic signature.
struct WordSignature {
  std::array<double, 3> frequencies{};  // Hz, within [1, 40]
  std::array<double, 3> amplitudes{};
  std::array<double, 3> phases{};
  int duration_ms = 0;
};

WordSignature word_signature(const std::string& word, std::uint64_t seed, int min_ms, int max_ms);

struct SyntheticUtterance {
  signal::EegRecording recording;
  std::size_t sentence_index = 0;
  std::uint64_t seed = 0;
};

// repetitions x sentences utterances, sentence-major, ids utt_0000...
// Throws if two distinct words would share all three frequencies.
std::vector<SyntheticUtterance> generate_synthetic(std::span<const Sentence> sentences, const SynthConfig& cfg);

// Binary recording file: text header, "data" line, then channel-major
// little-endian float32 samples.
void write_recording(std::ostream& out, const signal::EegRecording& rec);
signal::EegRecording read_recording(std::istream& in);
void save_recording(const std::filesystem::path& path, const signal::EegRecording& rec);
signal::EegRecording load_recording(const std::filesystem::path& path);

// CSV with a header row of channel labels and one row per sample; the
// transcript is the first line of the sidecar text file.
signal::EegRecording import_csv(const std::filesystem::path& csv, const std::filesystem::path& transcript,
                                const std::string& id = "", double sample_rate = signal::kSampleRate);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  Sentence transcript;
  std::uint64_t seed = 0;
  std::size_t sentence_index = 0;
};

void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(std::istream& in);

}  // namespace c2t::data
