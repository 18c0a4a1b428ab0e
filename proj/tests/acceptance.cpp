// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include "c2t/beam.hpp"
#include "c2t/corpus.hpp"
#include "c2t/kpca.hpp"
#include "c2t/ngram.hpp"
#include "c2t/optim.hpp"
#include "c2t/pipeline.hpp"
#include "c2t/signal.hpp"
#include "c2t/transformer.hpp"
#include "c2t/wer.hpp"
#include "helpers.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace c2t;
using nn::Index;
using nn::Matrix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("c2t_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<data::Sentence> default_sentences() {
  return data::read_sentences(fs::path(C2T_SOURCE_DIR) / "data/sentences.txt");
}

// 1 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  model::Transformer m(testing::tiny_config(5), 1);
  Rng rng(1);
  const Matrix f = testing::random_matrix(rng, 5, 6);
  const std::vector<int> targets = {3, 4, 3};
  auto params = m.parameters();
  const double err = nn::grad_check([&] { return m.loss(f, targets); }, params);
  const double secs = seconds_since(start);
  return {err < 1e-4 && secs < 30.0, "max relative error " + fmt("%.2e", err) + " over " +
                                         std::to_string(m.parameter_count()) + " parameters in " +
                                         fmt("%.1f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------------

Outcome beam_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  int agree = 0;
  const int vocab = 6;  // eos + 3 words are emittable
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    model::Transformer m(testing::tiny_config(vocab), 1000 + seed);
    std::vector<std::vector<int>> corpus;
    for (int s = 0; s < 5; ++s) {
      std::vector<int> sent;
      for (int i = 0, n = 1 + static_cast<int>(rng.below(3)); i < n; ++i) sent.push_back(3 + static_cast<int>(rng.below(3)));
      corpus.push_back(sent);
    }
    const auto lm = lm::NgramLm::fit(corpus, vocab);
    decode::TransformerScorer scorer(m, testing::random_matrix(rng, 6, 6));
    decode::DecodeConfig cfg;
    cfg.beam_width = 64;
    cfg.lm_weight = 0.3;
    cfg.max_len = 3;
    const auto b = decode::beam_search(scorer, &lm, cfg);
    const auto e = decode::exhaustive_decode(scorer, &lm, cfg.lm_weight, cfg.max_len);
    agree += b.tokens == e.tokens && b.score == e.score;
  }
  const double secs = seconds_since(start);
  return {agree == 50 && secs < 60.0,
          std::to_string(agree) + "/50 models token-identical in " + fmt("%.1f", secs) + " s"};
}

// 3 ---------------------------------------------------------------------------

double sign_aligned_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Index c = 0; c < a.cols(); ++c) {
    worst = std::max(worst, std::min((a.col(c) - b.col(c)).cwiseAbs().maxCoeff(),
                                     (a.col(c) + b.col(c)).cwiseAbs().maxCoeff()));
  }
  return worst;
}

Outcome kpca_oracle() {
  Rng rng(3);
  Matrix mix = testing::random_matrix(rng, 10, 10);
  for (Index j = 0; j < 10; ++j) mix.row(j) /= 1.0 + j;
  const Matrix x = testing::random_matrix(rng, 200, 10) * mix;
  reduce::KpcaOptions lin;
  lin.kernel = {1, 1.0, 0.0};
  lin.n_components = 5;
  lin.standardize = false;
  const auto km = reduce::fit_kpca(x, lin);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centred = x.rowwise() - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Matrix scores = centred * svd.matrixV().leftCols(5);
  const double err = sign_aligned_error(reduce::kpca_transform(km, x), scores);

  // production options on frame statistics of synthetic recordings
  const auto sentences = default_sentences();
  data::SynthConfig sc;
  sc.repetitions = 2;
  sc.seed = 3;
  const auto utts = data::generate_synthetic(std::span(sentences).first(10), sc);
  std::vector<Matrix> feats;
  Index rows = 0;
  for (const auto& u : utts) {
    feats.push_back(signal::extract_features(signal::preprocess(u.recording)));
    rows += feats.back().rows();
  }
  Matrix frames(rows, signal::kFeatureDim);
  Index at = 0;
  for (const auto& f : feats) {
    frames.middleRows(at, f.rows()) = f;
    at += f.rows();
  }
  const auto prod = reduce::fit_kpca(frames, {});
  const auto cum = prod.cumulative_explained_variance();
  bool monotone = true;
  for (std::size_t i = 1; i < cum.size(); ++i) monotone &= cum[i] >= cum[i - 1];
  const double end_err = std::abs(cum.back() - 1.0);
  return {err < 1e-8 && monotone && end_err < 1e-9,
          "linear-PCA agreement " + fmt("%.2e", err) + "; production curve over " +
              std::to_string(prod.landmarks.rows()) + " landmarks " + (monotone ? "monotone" : "NOT monotone") +
              ", ends " + fmt("%.3e", end_err) + " from 1"};
}

// 4 ---------------------------------------------------------------------------

// Amplitude of the filtered sine over the last half of a 10 s run.
double steady_gain(const signal::IirFilter& f, double hz) {
  const double fs = signal::kSampleRate;
  const int n = static_cast<int>(10 * fs);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] = std::sin(2.0 * M_PI * hz * t / fs);
  const auto y = f.apply(x);
  const int from = n / 2;
  Matrix a(n - from, 2);
  Eigen::VectorXd b(n - from);
  for (int t = from; t < n; ++t) {
    a(t - from, 0) = std::sin(2.0 * M_PI * hz * t / fs);
    a(t - from, 1) = std::cos(2.0 * M_PI * hz * t / fs);
    b(t - from) = y[static_cast<std::size_t>(t)];
  }
  const Eigen::VectorXd c = Eigen::MatrixXd(a).colPivHouseholderQr().solve(b);
  return std::hypot(c(0), c(1));
}

Outcome filter_responses() {
  const signal::PreprocessConfig pc;
  const auto bp = signal::design_butterworth_bandpass(pc.low_hz, pc.high_hz, signal::kSampleRate, pc.prototype_order);
  const auto full = signal::preprocessing_filter(pc);
  const double g10 = steady_gain(bp, 10.0);
  const double g60 = steady_gain(full, 60.0);
  return {g10 >= 0.9 && g10 <= 1.0 && g60 <= 0.1,
          "band-pass gain at 10 Hz " + fmt("%.6f", g10) + ", band-pass+notch gain at 60 Hz " + fmt("%.2e", g60)};
}

// 5 ---------------------------------------------------------------------------

Outcome wer_oracle() {
  const auto start = std::chrono::steady_clock::now();
  constexpr int kMax = 8, kAlphabet = 3;
  std::vector<std::vector<int>> refs{{}};
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (static_cast<int>(refs[i].size()) == kMax) continue;
    for (int a = 0; a < kAlphabet; ++a) {
      auto s = refs[i];
      s.push_back(a);
      refs.push_back(s);
    }
  }
  std::uint64_t pairs = 0, mismatches = 0;
  std::vector<int> hyp;
  // cols[j][i]: distance between r[0..i) and the current hypothesis prefix of length j
  std::vector<std::vector<int>> cols(kMax + 1, std::vector<int>(kMax + 1));
  for (const auto& r : refs) {
    if (r.empty()) continue;
    const std::size_t n = r.size();
    auto check = [&] {
      const auto w = metrics::wer(std::span<const int>(r), std::span<const int>(hyp));
      const int expect = cols[hyp.size()][n];
      const bool ok = w.errors() == expect && w.substitutions + w.deletions <= w.ref_length &&
                      w.insertions - w.deletions == static_cast<int>(hyp.size()) - static_cast<int>(n);
      mismatches += !ok;
      ++pairs;
    };
    for (std::size_t i = 0; i <= n; ++i) cols[0][i] = static_cast<int>(i);
    check();
    std::function<void()> extend = [&] {
      const std::size_t j = hyp.size();
      for (int a = 0; a < kAlphabet; ++a) {
        hyp.push_back(a);
        auto& prev = cols[j];
        auto& cur = cols[j + 1];
        cur[0] = static_cast<int>(j + 1);
        for (std::size_t i = 1; i <= n; ++i) {
          cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + (r[i - 1] != a)});
        }
        check();
        if (static_cast<int>(hyp.size()) < kMax) extend();
        hyp.pop_back();
      }
    };
    extend();
  }
  return {mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " disagreements, " +
                               fmt("%.1f", seconds_since(start)) + " s"};
}

// 6 ---------------------------------------------------------------------------

Outcome decoder_causality() {
  int token_ok = 0, frame_ok = 0, frame_checks = 0;
  int visible_changes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(6000 + static_cast<std::uint64_t>(trial));
    auto c = testing::tiny_config(9);
    c.d_model = 16;
    c.n_heads = 4;
    c.n_enc_layers = 2;
    c.n_dec_layers = 2;
    c.d_ff = 32;
    model::Transformer m(c, 6000 + static_cast<std::uint64_t>(trial));
    nn::NoGradGuard guard;
    const int valid = 6 + static_cast<int>(rng.below(10));
    const int padded = valid + 1 + static_cast<int>(rng.below(8));
    Matrix feats = testing::random_matrix(rng, padded, 6);
    std::vector<int> tokens{model::kSos};
    for (int i = 0; i < 7; ++i) tokens.push_back(3 + static_cast<int>(rng.below(6)));

    const auto memory = m.encode(feats, nullptr, nullptr, valid);
    const Matrix base = m.decode(tokens, memory, nullptr, nullptr, valid).value();

    // a future token
    auto moved = tokens;
    const std::size_t j = 1 + rng.below(moved.size() - 1);
    moved[j] = 3 + (moved[j] - 3 + 1 + static_cast<int>(rng.below(5))) % 6;
    const Matrix after = m.decode(moved, memory, nullptr, nullptr, valid).value();
    const Index keep = static_cast<Index>(j);
    token_ok += after.topRows(keep) == base.topRows(keep);

    // a feature frame beyond the end of the utterance
    Matrix feats2 = feats;
    const Index frame = valid + static_cast<Index>(rng.below(static_cast<std::uint64_t>(padded - valid)));
    feats2.row(frame) = testing::random_matrix(rng, 1, 6, 10.0);
    const Matrix after2 =
        m.decode(tokens, m.encode(feats2, nullptr, nullptr, valid), nullptr, nullptr, valid).value();
    frame_ok += after2 == base;
    ++frame_checks;

    // in-utterance frames reach every position through the bidirectional encoder
    Matrix feats3 = feats;
    feats3.row(valid - 1).array() += 1.0;
    const Matrix after3 =
        m.decode(tokens, m.encode(feats3, nullptr, nullptr, valid), nullptr, nullptr, valid).value();
    visible_changes += after3.row(0) != base.row(0);
  }
  return {token_ok == 100 && frame_ok == frame_checks,
          "future tokens " + std::to_string(token_ok) + "/100, frames past the utterance end " +
              std::to_string(frame_ok) + "/" + std::to_string(frame_checks) +
              " bit-identical (in-utterance frame edits reached the first position in " +
              std::to_string(visible_changes) + "/100, as a bidirectional encoder implies)"};
}

// 7 ---------------------------------------------------------------------------

struct LearnabilitySettings {
  int sentences = 5;
  int repetitions = 4;
  std::uint64_t seed = 7;
  int epochs = 120;
  int batch_size = 5;
  double lr = 1e-3;
  int warmup = 0;
  double noise = 0.5;
};

LearnabilitySettings learnability_settings() {
  LearnabilitySettings s;
  auto env = [](const char* name) { return std::getenv(name); };
  if (const char* v = env("C2T_ACC7_EPOCHS")) s.epochs = std::atoi(v);
  if (const char* v = env("C2T_ACC7_LR")) s.lr = std::atof(v);
  if (const char* v = env("C2T_ACC7_BATCH")) s.batch_size = std::atoi(v);
  if (const char* v = env("C2T_ACC7_SEED")) s.seed = std::strtoull(v, nullptr, 10);
  if (const char* v = env("C2T_ACC7_WARMUP")) s.warmup = std::atoi(v);
  return s;
}

double decode_wer(const model::Transformer& net, const lm::NgramLm& lm, const std::vector<model::Example>& set,
                  const data::Vocabulary& vocab) {
  std::vector<metrics::UtterancePair> pairs;
  decode::DecodeConfig dc;
  for (const auto& ex : set) {
    decode::TransformerScorer scorer(net, ex.features);
    const auto r = decode::beam_search(scorer, &lm, dc);
    pairs.push_back({ex.id, vocab.decode(ex.targets), vocab.decode(r.words)});
  }
  return 100.0 * metrics::corpus_wer(pairs).wer();
}

Outcome learnability() {
  const auto start = std::chrono::steady_clock::now();
  const auto s = learnability_settings();
  const auto all = default_sentences();
  const std::vector<data::Sentence> sentences(all.begin(), all.begin() + s.sentences);
  data::SynthConfig sc;
  sc.repetitions = s.repetitions;
  sc.seed = s.seed;
  sc.noise_level = s.noise;
  const auto utts = data::generate_synthetic(sentences, sc);

  // the last repetition of every sentence is held out
  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    (static_cast<int>(i % static_cast<std::size_t>(s.repetitions)) == s.repetitions - 1 ? held_idx : train_idx)
        .push_back(i);
  }
  std::vector<Matrix> frames;
  for (const auto& u : utts) frames.push_back(signal::extract_features(signal::preprocess(u.recording)));
  Index rows = 0;
  for (auto i : train_idx) rows += frames[i].rows();
  Matrix fit_frames(rows, signal::kFeatureDim);
  Index at = 0;
  for (auto i : train_idx) {
    fit_frames.middleRows(at, frames[i].rows()) = frames[i];
    at += frames[i].rows();
  }
  reduce::KpcaOptions ko;
  ko.seed = s.seed;
  const auto km = reduce::fit_kpca(fit_frames, ko);

  const auto vocab = data::Vocabulary::build(sentences);
  auto examples = [&](const std::vector<std::size_t>& idx) {
    std::vector<model::Example> out;
    for (auto i : idx) {
      out.push_back({utts[i].recording.id, reduce::append_deltas(reduce::kpca_transform(km, frames[i])),
                     vocab.encode(utts[i].recording.transcript)});
    }
    return out;
  };
  const auto train_set = examples(train_idx);
  const auto held_set = examples(held_idx);
  std::vector<std::vector<int>> lm_corpus;
  for (const auto& ex : train_set) lm_corpus.push_back(ex.targets);
  const auto lm = lm::NgramLm::fit(lm_corpus, vocab.size());

  auto mc = pipeline::small_model_config();
  mc.vocab_size = vocab.size();
  mc.input_dim = static_cast<int>(train_set.front().features.cols());
  model::Transformer net(mc, s.seed);
  model::TrainConfig tc;
  tc.epochs = s.epochs;
  tc.batch_size = s.batch_size;
  tc.lr = s.lr;
  tc.warmup_steps = s.warmup;
  tc.seed = s.seed;
  const bool verbose = std::getenv("C2T_ACC7_VERBOSE") != nullptr;
  const auto result = model::train(net, train_set, {}, tc, [&](const model::EpochMetrics& m) {
    if (verbose && (m.epoch % 10 == 0 || m.epoch == 1)) {
      std::cerr << "  epoch " << m.epoch << " loss " << fmt("%.4f", m.train_loss) << " ("
                << fmt("%.0f", seconds_since(start)) << " s)\n";
    }
  });
  const double train_wer = decode_wer(net, lm, train_set, vocab);
  const double held_wer = decode_wer(net, lm, held_set, vocab);
  const double minutes = seconds_since(start) / 60.0;
  return {train_wer <= 10.0 && held_wer <= 40.0 && s.epochs <= 300 && minutes <= 15.0,
          "train WER " + fmt("%.1f", train_wer) + "%, held-out WER " + fmt("%.1f", held_wer) + "% after " +
              std::to_string(result.history.size()) + " epochs, final loss " +
              fmt("%.4f", result.history.back().train_loss) + ", " + fmt("%.1f", minutes) +
              " min (reference real-data WERs 67.7% / 62.5%, not comparable)"};
}

// 8, 9 ------------------------------------------------------------------------

// Runs the CLI; returns true on exit status 0. Output goes to `log`.
bool cli(const std::string& args, const fs::path& log, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + C2T_CLI_PATH + "\" " + args + " >>\"" +
                          log.string() + "\" 2>&1";
  return std::system(cmd.c_str()) == 0;
}

const std::string kTinyFlags =
    "--d-model 16 --enc-layers 1 --dec-layers 1 --heads 2 --d-ff 32 --epochs 3 --batch-size 8 --lr 0.001 "
    "--beam-width 3 --max-len 10 --kpca-components 8 --max-landmarks 400";

Outcome subset_table() {
  const auto dir = scratch("subsets");
  const fs::path log = dir / "cli.log";
  const std::string common = "--out-dir \"" + (dir / "run").string() + "\" --corpus \"" +
                             (fs::path(C2T_SOURCE_DIR) / "data/sentences.txt").string() + "\" --seed 8 " + kTinyFlags;
  for (const char* stage : {"synth-data", "extract-features", "fit-kpca", "evaluate"}) {
    if (!cli(std::string(stage) + " " + common, log)) return {false, std::string(stage) + " failed; see " + log.string()};
  }
  const auto rows = pipeline::read_results(dir / "run" / "results.csv");

  // recompute every count from the manifest
  std::ifstream min(dir / "run" / "manifest.jsonl");
  const auto entries = data::read_manifest(min);
  std::vector<data::Sentence> order;
  for (const auto& e : entries) {
    if (std::find(order.begin(), order.end(), e.transcript) == order.end()) order.push_back(e.transcript);
  }
  bool counts_ok = rows.size() == 6;
  for (std::size_t r = 0; counts_ok && r < rows.size(); ++r) {
    const int k = data::kReferenceSubsetSizes[r];
    const std::set<data::Sentence> keep(order.begin(), order.begin() + k);
    std::set<std::string> words;
    std::size_t total = 0;
    for (const auto& e : entries) {
      if (!keep.count(e.transcript)) continue;
      ++total;
      words.insert(e.transcript.begin(), e.transcript.end());
    }
    counts_ok = rows[r].unique_sentences == static_cast<std::size_t>(k) && rows[r].total_sentences == total &&
                rows[r].unique_words == words.size();
  }

  // nesting: each subset's vocabulary contains the previous one
  bool nested = true;
  std::set<std::string> previous;
  for (int k : data::kReferenceSubsetSizes) {
    char tag[16];
    std::snprintf(tag, sizeof(tag), "k%02d", k);
    std::ifstream vin(dir / "run" / "eval" / tag / "vocab.txt");
    if (!vin) return {false, std::string("missing vocabulary for subset ") + tag};
    const auto v = data::Vocabulary::load(vin);
    std::set<std::string> current;
    for (int id = 3; id < v.size(); ++id) current.insert(v.word(id));
    nested &= std::includes(current.begin(), current.end(), previous.begin(), previous.end());
    previous = current;
  }
  std::string words;
  for (const auto& r : rows) words += (words.empty() ? "" : "/") + std::to_string(r.unique_words);
  return {counts_ok && nested, std::to_string(rows.size()) + " rows, counts " +
                                   (counts_ok ? "match" : "DO NOT match") + " the manifest, unique words " + words +
                                   ", nesting " + (nested ? "holds" : "VIOLATED")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Training metrics carry a wall-clock column; compare everything else.
std::string without_wall_clock(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  {
    std::ofstream corpus(dir / "sentences.txt");
    const auto all = default_sentences();
    for (int i = 0; i < 5; ++i) corpus << data::join(all[static_cast<std::size_t>(i)]) << '\n';
  }
  const fs::path log = dir / "cli.log";
  const std::vector<std::string> stages = {"synth-data",       "extract-features", "fit-kpca",
                                           "train --timing",   "decode --timing",  "evaluate --subset-k 5",
                                           "export-attention", "report-timing"};
  for (const char* run : {"a", "b"}) {
    const std::string env = std::string("C2T_THREADS=") + (run[0] == 'a' ? "1" : "3");
    const std::string common = "--out-dir \"" + (dir / run).string() + "\" --corpus \"" +
                               (dir / "sentences.txt").string() + "\" --seed 9 --repetitions 3 " + kTinyFlags;
    for (const auto& stage : stages) {
      if (!cli(stage + " " + common, log, env)) return {false, "run " + std::string(run) + ": " + stage + " failed"};
    }
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    const auto name = rel.filename().string();
    if (name.rfind("timing_", 0) == 0) continue;
    const auto other = dir / "b" / rel;
    std::string x = slurp(e.path()), y = fs::exists(other) ? slurp(other) : std::string("\x01missing");
    if (name == "train_metrics.csv") {
      x = without_wall_clock(x);
      y = without_wall_clock(y);
    }
    ++compared;
    if (x != y) differing.push_back(rel.string());
  }
  bool key_files = true;
  for (const char* f : {"model.ckpt", "decode.tsv", "wer.csv", "results.csv"}) key_files &= fs::exists(dir / "a" / f);
  std::string detail = std::to_string(compared) + " artifacts compared across two runs (1 and 3 decode threads), " +
                       std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) detail += " " + d;
  return {differing.empty() && key_files && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check on the tiny transformer", gradient_check},
      {"beam search equals exhaustive search", beam_equivalence},
      {"kernel PCA oracle and explained variance", kpca_oracle},
      {"filter responses by sine simulation", filter_responses},
      {"word error rate oracle", wer_oracle},
      {"decoder causality", decoder_causality},
      {"desk-scale learnability", learnability},
      {"vocabulary-scaling harness", subset_table},
      {"pipeline determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
