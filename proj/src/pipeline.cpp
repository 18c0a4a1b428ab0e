#include "c2t/pipeline.hpp"

#include "c2t/container.hpp"
#include "c2t/kpca.hpp"
#include "c2t/ngram.hpp"
#include "c2t/rng.hpp"
#include "c2t/signal.hpp"
#include "c2t/wer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace c2t::pipeline {

using nn::Index;
using nn::Matrix;
using clock_type = std::chrono::steady_clock;

MissingArtifact::MissingArtifact(const fs::path& path, const std::string& producer)
    : Error("missing " + path.string() + "; run `c2t " + producer + "` first") {}

namespace {

std::ostream& log_of(const RunConfig& cfg) {
  static std::ostream null_stream(nullptr);
  return cfg.log ? *cfg.log : null_stream;
}

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifact(path, producer);
}

// Writes through a temporary file so a failed stage leaves no partial artifact.
void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body, bool binary = false) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double elapsed(clock_type::time_point since) {
  return std::chrono::duration<double>(clock_type::now() - since).count();
}

fs::path manifest_path(const RunConfig& cfg) { return cfg.out_dir / "manifest.jsonl"; }
fs::path features_path(const RunConfig& cfg, const std::string& id) { return cfg.out_dir / "features" / (id + ".bin"); }
fs::path inputs_path(const RunConfig& cfg, const std::string& id) { return cfg.out_dir / "inputs" / (id + ".bin"); }

std::vector<data::ManifestEntry> load_manifest(const RunConfig& cfg) {
  const auto path = manifest_path(cfg);
  require(path, "synth-data");
  std::ifstream in(path);
  auto entries = data::read_manifest(in);
  if (entries.empty()) throw Error("manifest " + path.string() + " is empty");
  return entries;
}

std::vector<data::Sentence> transcripts_of(const std::vector<data::ManifestEntry>& entries) {
  std::vector<data::Sentence> out;
  for (const auto& e : entries) out.push_back(e.transcript);
  return out;
}

data::Split full_split(const RunConfig& cfg, std::size_t n) {
  data::SplitSpec spec;
  spec.seed = mix_seed(cfg.seed, fnv1a("split"));
  auto s = data::split(n, spec);
  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (auto i : *part) {
      if (!seen.insert(i).second) throw Error("split: partitions overlap");
    }
  }
  if (seen.size() != n) throw Error("split: partitions do not cover the corpus");
  return s;
}

Matrix load_inputs(const RunConfig& cfg, const std::string& id) {
  const auto path = inputs_path(cfg, id);
  require(path, "fit-kpca");
  return load_container(path).matrix("inputs");
}

std::vector<model::Example> make_examples(const RunConfig& cfg, const std::vector<data::ManifestEntry>& entries,
                                          const std::vector<std::size_t>& indices, const data::Vocabulary& vocab) {
  std::vector<model::Example> out;
  for (auto i : indices) {
    model::Example ex;
    ex.id = entries[i].id;
    ex.features = load_inputs(cfg, ex.id);
    ex.targets = vocab.encode(entries[i].transcript);
    out.push_back(std::move(ex));
  }
  return out;
}

lm::NgramLm fit_lm(const std::vector<model::Example>& train_set, int vocab_size) {
  std::vector<std::vector<int>> sentences;
  for (const auto& ex : train_set) sentences.push_back(ex.targets);
  return lm::NgramLm::fit(sentences, vocab_size);
}

model::TransformerConfig resolved_model_config(const RunConfig& cfg, int vocab_size, int input_dim) {
  auto c = cfg.model;
  c.vocab_size = vocab_size;
  c.input_dim = input_dim;
  c.validate();
  return c;
}

std::uint64_t model_seed(const RunConfig& cfg) { return mix_seed(cfg.seed, fnv1a("model")); }

model::TrainConfig resolved_train_config(const RunConfig& cfg) {
  auto t = cfg.train;
  t.seed = mix_seed(cfg.seed, fnv1a("train"));
  return t;
}

void write_metrics(const fs::path& path, const model::TrainResult& r) {
  write_file(path, [&](std::ostream& out) {
    out << "epoch,train_loss,val_loss,wall_seconds\n";
    for (const auto& m : r.history) {
      out << m.epoch << ',' << fmt("%.8f", m.train_loss) << ','
          << (std::isnan(m.val_loss) ? std::string("NA") : fmt("%.8f", m.val_loss)) << ','
          << fmt("%.3f", m.wall_seconds) << '\n';
    }
  });
}

struct Trained {
  model::Transformer model;
  model::TrainResult result;
  double seconds;
};

Trained train_model(const RunConfig& cfg, const std::vector<model::Example>& train_set,
                    const std::vector<model::Example>& val_set, int vocab_size) {
  const int input_dim = static_cast<int>(train_set.front().features.cols());
  model::Transformer net(resolved_model_config(cfg, vocab_size, input_dim), model_seed(cfg));
  auto& log = log_of(cfg);
  log << "training " << net.config().to_string() << " params=" << net.parameter_count() << " on "
      << train_set.size() << " utterances\n";
  const auto start = clock_type::now();
  auto result = model::train(net, train_set, val_set, resolved_train_config(cfg), [&](const model::EpochMetrics& m) {
    log << "  epoch " << m.epoch << " train " << fmt("%.4f", m.train_loss) << " val "
        << (std::isnan(m.val_loss) ? std::string("NA") : fmt("%.4f", m.val_loss)) << '\n';
  });
  return {std::move(net), std::move(result), elapsed(start)};
}

std::vector<decode::DecodeResult> decode_all(const model::Transformer& net, const lm::NgramLm* lm,
                                             const std::vector<model::Example>& examples,
                                             const decode::DecodeConfig& dcfg, int threads) {
  std::vector<decode::DecodeResult> out(examples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      try {
        decode::TransformerScorer scorer(net, examples[i].features);
        out[i] = decode::beam_search(scorer, lm, dcfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(examples.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<metrics::UtterancePair> write_decodes(const fs::path& path, const std::vector<model::Example>& examples,
                                                  const std::vector<decode::DecodeResult>& results,
                                                  const data::Vocabulary& vocab) {
  std::vector<metrics::UtterancePair> pairs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    pairs.push_back({examples[i].id, vocab.decode(examples[i].targets), vocab.decode(results[i].words)});
  }
  write_file(path, [&](std::ostream& out) {
    out << "id\treference\thypothesis\tscore\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      out << pairs[i].id << '\t' << data::join(pairs[i].reference) << '\t' << data::join(pairs[i].hypothesis) << '\t'
          << fmt("%.6f", results[i].score) << (results[i].truncated ? "\ttruncated" : "") << '\n';
    }
  });
  return pairs;
}

struct LoadedModel {
  model::Transformer model;
  data::Vocabulary vocab;
  lm::NgramLm lm;
  double load_seconds;
};

LoadedModel load_model(const RunConfig& cfg) {
  const auto start = clock_type::now();
  const fs::path ckpt = cfg.model_path.empty() ? cfg.out_dir / "model.ckpt" : cfg.model_path;
  const fs::path dir = ckpt.parent_path().empty() ? fs::path(".") : ckpt.parent_path();
  require(ckpt, "train");
  require(dir / "vocab.txt", "train");
  require(dir / "lm.txt", "train");
  auto net = model::Transformer::from_container(load_container(ckpt));
  std::ifstream vin(dir / "vocab.txt");
  auto vocab = data::Vocabulary::load(vin);
  std::ifstream lin(dir / "lm.txt");
  auto lm = lm::NgramLm::load(lin);
  if (vocab.size() != net.config().vocab_size || lm.vocab_size() != vocab.size()) {
    throw Error("checkpoint, vocabulary and language model in " + dir.string() + " disagree on vocabulary size");
  }
  return {std::move(net), std::move(vocab), std::move(lm), elapsed(start)};
}

decode::DecodeConfig resolved_decode_config(const RunConfig& cfg, const model::TransformerConfig& mc) {
  auto d = cfg.decode;
  d.max_len = std::min(d.max_len, mc.max_tgt_len);
  return d;
}

void write_results(const fs::path& path, const std::vector<SubsetRow>& rows) {
  write_file(path, [&](std::ostream& out) {
    out << "total_sentences,unique_sentences,unique_words,wer_percent\n";
    for (const auto& r : rows) {
      out << r.total_sentences << ',' << r.unique_sentences << ',' << r.unique_words << ','
          << (std::isnan(r.wer_percent) ? std::string("NA") : fmt("%.2f", r.wer_percent)) << '\n';
    }
  });
}

double report_wer(const RunConfig& cfg, const std::vector<metrics::UtterancePair>& pairs) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto c = metrics::corpus_wer(pairs);
  return 100.0 * (cfg.macro ? c.macro_wer : c.wer());
}

}  // namespace

void synth_data(const RunConfig& cfg) {
  auto& log = log_of(cfg);
  if (!fs::exists(cfg.corpus)) throw Error("corpus file " + cfg.corpus.string() + " not found");
  const auto sentences = data::read_sentences(cfg.corpus);
  data::SynthConfig sc;
  sc.repetitions = cfg.repetitions;
  sc.seed = cfg.seed;
  sc.noise_level = cfg.noise_level;
  const auto utterances = data::generate_synthetic(sentences, sc);
  std::vector<data::ManifestEntry> entries;
  for (const auto& u : utterances) {
    const std::string rel = "recordings/" + u.recording.id + ".eeg";
    write_file(cfg.out_dir / rel, [&](std::ostream& out) { data::write_recording(out, u.recording); }, true);
    entries.push_back({u.recording.id, rel, u.recording.transcript, u.seed, u.sentence_index});
  }
  write_file(manifest_path(cfg), [&](std::ostream& out) { data::write_manifest(out, entries); });
  log << "synthesised " << entries.size() << " utterances from " << sentences.size() << " sentences into "
      << cfg.out_dir.string() << '\n';
}

void extract_features(const RunConfig& cfg) {
  const auto entries = load_manifest(cfg);
  std::size_t frames = 0;
  for (const auto& e : entries) {
    const auto path = cfg.out_dir / e.path;
    require(path, "synth-data");
    auto rec = data::load_recording(path);
    rec.validate();
    const Matrix f = signal::extract_features(signal::preprocess(rec));
    Container c;
    c.metadata["id"] = e.id;
    c.add("frames", f);
    save_container(features_path(cfg, e.id), c);
    frames += static_cast<std::size_t>(f.rows());
  }
  log_of(cfg) << "extracted " << frames << " frames from " << entries.size() << " recordings\n";
}

void fit_kpca(const RunConfig& cfg) {
  const auto entries = load_manifest(cfg);
  const auto sp = full_split(cfg, entries.size());
  std::vector<Matrix> features(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto path = features_path(cfg, entries[i].id);
    require(path, "extract-features");
    features[i] = load_container(path).matrix("frames");
  }
  Index rows = 0;
  for (auto i : sp.train) rows += features[i].rows();
  Matrix train_frames(rows, signal::kFeatureDim);
  Index at = 0;
  for (auto i : sp.train) {
    train_frames.middleRows(at, features[i].rows()) = features[i];
    at += features[i].rows();
  }
  reduce::KpcaOptions opt;
  opt.n_components = cfg.kpca_components;
  opt.max_landmarks = cfg.max_landmarks;
  opt.seed = mix_seed(cfg.seed, fnv1a("kpca"));
  opt.standardize = cfg.standardize;
  const auto km = reduce::fit_kpca(train_frames, opt);
  save_container(cfg.out_dir / "kpca.bin", km.to_container());
  write_file(cfg.out_dir / "explained_variance.csv",
             [&](std::ostream& out) { reduce::write_explained_variance_csv(out, km); });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Container c;
    c.metadata["id"] = entries[i].id;
    c.add("inputs", reduce::append_deltas(reduce::kpca_transform(km, features[i])));
    save_container(inputs_path(cfg, entries[i].id), c);
  }
  write_file(cfg.out_dir / "split.tsv", [&](std::ostream& out) {
    out << "id\tpartition\n";
    for (auto i : sp.train) out << entries[i].id << "\ttrain\n";
    for (auto i : sp.validation) out << entries[i].id << "\tvalidation\n";
    for (auto i : sp.test) out << entries[i].id << "\ttest\n";
  });
  const auto cum = km.cumulative_explained_variance();
  log_of(cfg) << "kpca on " << train_frames.rows() << " training frames, " << km.n_components
              << " components explain " << fmt("%.4f", cum[static_cast<std::size_t>(km.n_components - 1)])
              << " of the variance\n";
}

void train(const RunConfig& cfg) {
  const auto entries = load_manifest(cfg);
  const auto sp = full_split(cfg, entries.size());
  const auto vocab = data::Vocabulary::build(transcripts_of(entries));
  const auto train_set = make_examples(cfg, entries, sp.train, vocab);
  const auto val_set = make_examples(cfg, entries, sp.validation, vocab);
  auto t = train_model(cfg, train_set, val_set, vocab.size());
  save_container(cfg.out_dir / "model.ckpt", t.model.to_container());
  write_file(cfg.out_dir / "vocab.txt", [&](std::ostream& out) { vocab.save(out); });
  const auto lm = fit_lm(train_set, vocab.size());
  write_file(cfg.out_dir / "lm.txt", [&](std::ostream& out) { lm.save(out); });
  write_metrics(cfg.out_dir / "train_metrics.csv", t.result);
  if (cfg.timing) {
    write_file(cfg.out_dir / "timing_train.csv", [&](std::ostream& out) {
      out << "stage,examples,epochs,seconds,minutes_per_example\n";
      out << "train," << train_set.size() << ',' << cfg.train.epochs << ',' << fmt("%.3f", t.seconds) << ','
          << fmt("%.6f", t.seconds / 60.0 / static_cast<double>(train_set.size())) << '\n';
    });
  }
  log_of(cfg) << "best epoch " << t.result.best_epoch << ", checkpoint written to "
              << (cfg.out_dir / "model.ckpt").string() << '\n';
}

void decode(const RunConfig& cfg) {
  const auto entries = load_manifest(cfg);
  const auto sp = full_split(cfg, entries.size());
  const auto start = clock_type::now();
  const auto loaded = load_model(cfg);
  std::vector<std::size_t> indices;
  if (cfg.split == "train") indices = sp.train;
  else if (cfg.split == "validation") indices = sp.validation;
  else if (cfg.split == "test") indices = sp.test;
  else if (cfg.split == "all") {
    for (std::size_t i = 0; i < entries.size(); ++i) indices.push_back(i);
  } else {
    throw Error("decode: unknown split '" + cfg.split + "'");
  }
  const auto examples = make_examples(cfg, entries, indices, loaded.vocab);
  const auto dcfg = resolved_decode_config(cfg, loaded.model.config());
  const auto decode_start = clock_type::now();
  const auto results = decode_all(loaded.model, &loaded.lm, examples, dcfg, cfg.threads);
  const double decode_seconds = elapsed(decode_start);
  const double total_seconds = elapsed(start);
  const auto pairs = write_decodes(cfg.out_dir / "decode.tsv", examples, results, loaded.vocab);
  const auto c = metrics::corpus_wer(pairs);
  write_file(cfg.out_dir / "wer.csv", [&](std::ostream& out) {
    out << "split,utterances,reference_words,substitutions,deletions,insertions,wer_percent,macro_wer_percent\n";
    out << cfg.split << ',' << pairs.size() << ',' << c.pooled.ref_length << ',' << c.pooled.substitutions << ','
        << c.pooled.deletions << ',' << c.pooled.insertions << ',' << fmt("%.2f", 100.0 * c.wer()) << ','
        << fmt("%.2f", 100.0 * c.macro_wer) << '\n';
  });
  if (cfg.timing) {
    write_file(cfg.out_dir / "timing_decode.csv", [&](std::ostream& out) {
      out << "stage,examples,load_seconds,decode_seconds,minutes_per_example\n";
      out << "inference," << examples.size() << ',' << fmt("%.3f", loaded.load_seconds) << ','
          << fmt("%.3f", decode_seconds) << ','
          << fmt("%.6f", total_seconds / 60.0 / static_cast<double>(examples.size())) << '\n';
    });
  }
  log_of(cfg) << cfg.split << " WER " << fmt("%.2f", report_wer(cfg, pairs)) << "% over " << pairs.size()
              << " utterances\n";
}

void evaluate(const RunConfig& cfg) {
  auto& log = log_of(cfg);
  const auto entries = load_manifest(cfg);
  const auto transcripts = transcripts_of(entries);
  const auto sp = full_split(cfg, entries.size());
  std::vector<int> ks;
  if (cfg.subset_k > 0) {
    ks.push_back(cfg.subset_k);
  } else {
    ks.assign(std::begin(data::kReferenceSubsetSizes), std::end(data::kReferenceSubsetSizes));
  }
  std::optional<LoadedModel> fixed;
  if (!cfg.model_path.empty()) fixed = load_model(cfg);

  std::vector<SubsetRow> rows;
  std::vector<data::Sentence> previous;
  for (int k : ks) {
    const auto subset = data::make_subset(transcripts, sp, k);
    for (const auto& s : previous) {
      if (std::find(subset.sentences.begin(), subset.sentences.end(), s) == subset.sentences.end()) {
        throw Error("evaluate: subset " + std::to_string(k) + " does not contain the previous subset");
      }
    }
    previous = subset.sentences;

    char tag[16];
    std::snprintf(tag, sizeof(tag), "k%02d", k);
    const fs::path dir = cfg.out_dir / "eval" / tag;
    SubsetRow row{k, subset.total_sentences, subset.unique_sentences, subset.unique_words, subset.split.test.size(),
                  std::numeric_limits<double>::quiet_NaN()};

    std::vector<model::Example> test_set;
    std::vector<decode::DecodeResult> results;
    if (fixed) {
      test_set = make_examples(cfg, entries, subset.split.test, fixed->vocab);
      results = decode_all(fixed->model, &fixed->lm, test_set, resolved_decode_config(cfg, fixed->model.config()),
                           cfg.threads);
      if (!test_set.empty()) row.wer_percent = report_wer(cfg, write_decodes(dir / "decode.tsv", test_set, results, fixed->vocab));
    } else {
      const auto vocab = data::Vocabulary::build(subset.sentences);
      const auto train_set = make_examples(cfg, entries, subset.split.train, vocab);
      const auto val_set = make_examples(cfg, entries, subset.split.validation, vocab);
      test_set = make_examples(cfg, entries, subset.split.test, vocab);
      if (train_set.empty()) throw Error("evaluate: subset " + std::to_string(k) + " has no training utterances");
      auto t = train_model(cfg, train_set, val_set, vocab.size());
      const auto lm = fit_lm(train_set, vocab.size());
      save_container(dir / "model.ckpt", t.model.to_container());
      write_file(dir / "vocab.txt", [&](std::ostream& out) { vocab.save(out); });
      write_file(dir / "lm.txt", [&](std::ostream& out) { lm.save(out); });
      write_metrics(dir / "train_metrics.csv", t.result);
      results = decode_all(t.model, &lm, test_set, resolved_decode_config(cfg, t.model.config()), cfg.threads);
      if (!test_set.empty()) row.wer_percent = report_wer(cfg, write_decodes(dir / "decode.tsv", test_set, results, vocab));
    }
    rows.push_back(row);
    log << "subset k=" << k << ": " << row.total_sentences << " utterances, " << row.unique_words
        << " unique words, " << row.test_utterances << " test utterances, WER "
        << (std::isnan(row.wer_percent) ? std::string("NA") : fmt("%.2f", row.wer_percent) + "%") << '\n';
  }
  write_results(cfg.out_dir / "results.csv", rows);

  log << "reference unique-word counts (historical, not targets):";
  for (std::size_t i = 0; i < std::size(data::kReferenceSubsetSizes); ++i) {
    log << ' ' << data::kReferenceSubsetSizes[i] << ':' << data::kReferenceUniqueWords[i];
  }
  log << '\n';
}

void export_attention(const RunConfig& cfg) {
  const auto entries = load_manifest(cfg);
  const auto sp = full_split(cfg, entries.size());
  const auto loaded = load_model(cfg);
  const auto& mc = loaded.model.config();
  const int layer = cfg.layer < 0 ? mc.n_dec_layers - 1 : cfg.layer;
  if (layer >= mc.n_dec_layers) {
    throw Error("export-attention: layer " + std::to_string(layer) + " out of range (model has " +
                std::to_string(mc.n_dec_layers) + " decoder layers)");
  }
  if (cfg.head < 0 || cfg.head >= mc.n_heads) {
    throw Error("export-attention: head " + std::to_string(cfg.head) + " out of range (model has " +
                std::to_string(mc.n_heads) + " heads)");
  }
  std::size_t index = sp.test.empty() ? 0 : sp.test.front();
  if (!cfg.utterance.empty()) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.id == cfg.utterance; });
    if (it == entries.end()) throw Error("export-attention: unknown utterance " + cfg.utterance);
    index = static_cast<std::size_t>(it - entries.begin());
  }
  const std::string id = entries[index].id;
  const Matrix features = load_inputs(cfg, id);
  decode::TransformerScorer scorer(loaded.model, features);
  const auto result = decode::beam_search(scorer, &loaded.lm, resolved_decode_config(cfg, mc));
  std::vector<int> inputs = result.tokens;
  if (!result.truncated) inputs.pop_back();

  model::ForwardTrace trace;
  trace.cross_attention_layer = layer;
  {
    nn::NoGradGuard guard;
    loaded.model.decode(inputs, scorer.memory(), &trace);
  }
  const Matrix& w = trace.cross_attention.at(static_cast<std::size_t>(cfg.head));
  const std::string stem = "attention_" + id + "_l" + std::to_string(layer) + "_h" + std::to_string(cfg.head);
  write_file(cfg.out_dir / (stem + ".csv"), [&](std::ostream& out) {
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) out << (c ? "," : "") << fmt("%.9g", w(r, c));
      out << '\n';
    }
  });
  write_file(cfg.out_dir / (stem + ".pgm"), [&](std::ostream& out) { write_pgm(out, w); }, true);
  log_of(cfg) << "decoded '" << data::join(loaded.vocab.decode(result.words)) << "'; wrote " << w.rows() << " x "
              << w.cols() << " attention matrix to " << (cfg.out_dir / (stem + ".csv")).string() << '\n';
}

void report_timing(const RunConfig& cfg) {
  const auto train_path = cfg.out_dir / "timing_train.csv";
  const auto decode_path = cfg.out_dir / "timing_decode.csv";
  require(train_path, "train --timing");
  require(decode_path, "decode --timing");
  auto last_field = [](const fs::path& p) {
    std::ifstream in(p);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto comma = row.rfind(',');
    if (comma == std::string::npos) throw Error("malformed timing file " + p.string());
    return row.substr(comma + 1);
  };
  const std::string train_mpe = last_field(train_path);
  const std::string infer_mpe = last_field(decode_path);
  write_file(cfg.out_dir / "timing_report.csv", [&](std::ostream& out) {
    out << "source,train_min_per_example,inference_min_per_example\n";
    out << "measured," << train_mpe << ',' << infer_mpe << '\n';
    out << "reference_set_a,0.017,0.016\n";
    out << "reference_set_b,0.022,0.015\n";
  });
  auto& log = log_of(cfg);
  log << "minutes per example: train " << train_mpe << ", inference " << infer_mpe << '\n';
  log << "reference (other hardware, not comparable): set A 0.017 / 0.016, set B 0.022 / 0.015\n";
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"synth-data", "extract-features", "fit-kpca",     "train",
                                                 "decode",     "evaluate",         "export-attention",
                                                 "report-timing"};
  return names;
}

void run(const std::string& subcommand, const RunConfig& cfg) {
  if (subcommand == "synth-data") synth_data(cfg);
  else if (subcommand == "extract-features") extract_features(cfg);
  else if (subcommand == "fit-kpca") fit_kpca(cfg);
  else if (subcommand == "train") train(cfg);
  else if (subcommand == "decode") decode(cfg);
  else if (subcommand == "evaluate") evaluate(cfg);
  else if (subcommand == "export-attention") export_attention(cfg);
  else if (subcommand == "report-timing") report_timing(cfg);
  else throw Error("unknown subcommand '" + subcommand + "'");
}

std::vector<SubsetRow> read_results(const fs::path& path) {
  require(path, "evaluate");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  if (line != "total_sentences,unique_sentences,unique_words,wer_percent") {
    throw Error("results file " + path.string() + " has an unexpected header");
  }
  std::vector<SubsetRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c, d;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, c, ',');
    std::getline(ls, d, ',');
    SubsetRow r;
    r.total_sentences = std::stoul(a);
    r.unique_sentences = std::stoul(b);
    r.k = static_cast<int>(r.unique_sentences);
    r.unique_words = std::stoul(c);
    r.wer_percent = d == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(d);
    rows.push_back(r);
  }
  return rows;
}

void write_pgm(std::ostream& out, const Matrix& m) {
  if (m.size() == 0) throw Error("write_pgm: empty matrix");
  const double top = m.maxCoeff();
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = top > 0.0 ? std::clamp(m(r, c) / top, 0.0, 1.0) : 0.0;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
}

model::TransformerConfig small_model_config() {
  model::TransformerConfig c;
  c.d_model = 64;
  c.n_enc_layers = 2;
  c.n_dec_layers = 2;
  c.n_heads = 4;
  c.d_k = 16;
  c.d_v = 16;
  c.d_ff = 128;
  return c;
}

int threads_from_env() {
  const char* v = std::getenv("C2T_THREADS");
  if (!v || !*v) return 1;
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    throw Error(std::string("C2T_THREADS must be a positive integer, got '") + v + "'");
  }
}

}  // namespace c2t::pipeline
