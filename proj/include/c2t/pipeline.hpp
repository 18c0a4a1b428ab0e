#pragma once

// File-based pipeline behind the c2t command-line tool. Each stage reads the
// artifacts of earlier stages from the run directory and writes its own.
//
//   synth-data        manifest.jsonl, recordings/<id>.eeg
//   extract-features  features/<id>.bin           (T x 155 frame statistics)
//   fit-kpca          kpca.bin, explained_variance.csv, split.tsv,
//                     inputs/<id>.bin             (T x 3C reduced + deltas)
//   train             model.ckpt, vocab.txt, lm.txt, train_metrics.csv
//   decode            decode.tsv, wer.csv
//   evaluate          results.csv, eval/k<k>/...
//   export-attention  attention_<id>_l<layer>_h<head>.{csv,pgm}
//   report-timing     timing_report.csv

#include "c2t/beam.hpp"
#include "c2t/corpus.hpp"
#include "c2t/transformer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace c2t::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path corpus = "data/sentences.txt";
  fs::path out_dir = "run";
  std::uint64_t seed = 0;

  // synth-data
  int repetitions = 3;
  double noise_level = 0.5;

  // fit-kpca
  int kpca_components = 30;
  int max_landmarks = 2000;
  bool standardize = true;

  // train; vocab_size and input_dim are filled from the data
  model::TransformerConfig model;
  model::TrainConfig train;

  // decode / evaluate
  decode::DecodeConfig decode;
  std::string split = "test";  // decode: train, validation, test or all
  int subset_k = 0;            // evaluate: 0 runs every subset size
  bool macro = false;          // report macro-averaged instead of pooled WER
  fs::path model_path;         // evaluate/decode/export-attention: checkpoint to use
  int threads = 1;

  // export-attention
  std::string utterance;  // empty: first test utterance
  int layer = -1;         // -1: last decoder layer
  int head = 0;

  bool timing = false;
  std::ostream* log = nullptr;
};

// A required input is missing; the message names the producing subcommand.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const fs::path& path, const std::string& producer);
};

void synth_data(const RunConfig& cfg);
void extract_features(const RunConfig& cfg);
void fit_kpca(const RunConfig& cfg);
void train(const RunConfig& cfg);
void decode(const RunConfig& cfg);
void evaluate(const RunConfig& cfg);
void export_attention(const RunConfig& cfg);
void report_timing(const RunConfig& cfg);

// Runs a subcommand by name.
void run(const std::string& subcommand, const RunConfig& cfg);
const std::vector<std::string>& subcommands();

// Row of the subset table; wer_percent is NaN when the subset has no test
// utterances.
struct SubsetRow {
  int k = 0;
  std::size_t total_sentences = 0;
  std::size_t unique_sentences = 0;
  std::size_t unique_words = 0;
  std::size_t test_utterances = 0;
  double wer_percent = 0.0;
};

std::vector<SubsetRow> read_results(const fs::path& path);

// Grayscale binary PGM, values scaled so the maximum maps to 255.
void write_pgm(std::ostream& out, const nn::Matrix& m);

// Reduced config used by the desk-scale tests and the smoke runs.
model::TransformerConfig small_model_config();

// Worker count from C2T_THREADS (default 1, at least 1).
int threads_from_env();

}  // namespace c2t::pipeline
