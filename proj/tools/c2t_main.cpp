#include "c2t/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  namespace pl = c2t::pipeline;
  pl::RunConfig cfg;
  std::string corpus = cfg.corpus.string();
  std::string out_dir = cfg.out_dir.string();
  std::string model_path;
  bool quiet = false;

  CLI::App app{"EEG-to-text pipeline: synthetic data, features, kernel PCA, transformer training and decoding"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();

  app.add_option("--corpus", corpus, "Sentence list, one sentence per line")->group("Data");
  app.add_option("--out-dir", out_dir, "Run directory holding every artifact")->group("Data");
  app.add_option("--seed", cfg.seed, "Seed for synthesis, split, initialisation and shuffling")->group("Data");
  app.add_option("--repetitions", cfg.repetitions, "Recordings per sentence")->group("Data");
  app.add_option("--noise", cfg.noise_level, "White-noise level relative to the signal amplitude")->group("Data");

  app.add_option("--kpca-components", cfg.kpca_components, "Retained kernel PCA components")->group("Features");
  app.add_option("--max-landmarks", cfg.max_landmarks, "Frames used to fit kernel PCA")->group("Features");
  app.add_flag("!--no-standardize", cfg.standardize, "Skip z-scoring features before the kernel")->group("Features");

  app.add_option("--d-model", cfg.model.d_model, "Model width")->group("Model");
  app.add_option("--enc-layers", cfg.model.n_enc_layers, "Encoder layers")->group("Model");
  app.add_option("--dec-layers", cfg.model.n_dec_layers, "Decoder layers")->group("Model");
  app.add_option("--heads", cfg.model.n_heads, "Attention heads; d_k = d_v = d_model / heads")->group("Model");
  app.add_option("--d-ff", cfg.model.d_ff, "Feed-forward width")->group("Model");
  app.add_option("--dropout", cfg.model.dropout, "Dropout rate")->group("Model");

  app.add_option("--epochs", cfg.train.epochs, "Training epochs")->group("Training");
  app.add_option("--batch-size", cfg.train.batch_size, "Utterances per mini-batch")->group("Training");
  app.add_option("--lr", cfg.train.lr, "Adam learning rate")->group("Training");
  app.add_option("--warmup", cfg.train.warmup_steps, "Warmup steps for the inverse-sqrt schedule (0: constant)")
      ->group("Training");
  app.add_option("--label-smoothing", cfg.train.label_smoothing, "Label smoothing")->group("Training");

  app.add_option("--beam-width", cfg.decode.beam_width, "Beam width")->group("Decoding");
  app.add_option("--lm-weight", cfg.decode.lm_weight, "Language-model weight in shallow fusion")->group("Decoding");
  app.add_option("--max-len", cfg.decode.max_len, "Maximum emitted tokens including eos")->group("Decoding");
  app.add_flag("--length-normalize", cfg.decode.length_normalize, "Rank finished hypotheses by per-token score")
      ->group("Decoding");
  app.add_option("--split", cfg.split, "Partition to decode")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->group("Decoding");
  app.add_option("--subset-k", cfg.subset_k, "Evaluate one subset size only (0: all six)")->group("Decoding");
  app.add_flag("--macro", cfg.macro, "Report macro-averaged rather than pooled WER")->group("Decoding");
  app.add_option("--model", model_path, "Checkpoint to use instead of the run directory's model.ckpt")
      ->group("Decoding");

  app.add_option("--utterance", cfg.utterance, "Utterance id for export-attention (default: first test utterance)")
      ->group("Attention");
  app.add_option("--layer", cfg.layer, "Decoder layer (-1: last)")->group("Attention");
  app.add_option("--head", cfg.head, "Attention head")->group("Attention");

  app.add_flag("--timing", cfg.timing, "Write wall-clock timing files for train and decode")->group("Other");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output")->group("Other");

  app.add_subcommand("synth-data", "Generate synthetic recordings and the manifest");
  app.add_subcommand("extract-features", "Filter recordings and compute frame statistics");
  app.add_subcommand("fit-kpca", "Fit kernel PCA on training frames and write reduced inputs");
  app.add_subcommand("train", "Train the transformer, vocabulary and language model");
  app.add_subcommand("decode", "Beam-search decode a partition and score it");
  app.add_subcommand("evaluate", "Train and score each unique-sentence subset");
  app.add_subcommand("export-attention", "Write one cross-attention head as CSV and PGM");
  app.add_subcommand("report-timing", "Summarise timing files next to reference values");

  CLI11_PARSE(app, argc, argv);

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    cfg.corpus = corpus;
    cfg.out_dir = out_dir;
    cfg.model_path = model_path;
    if (cfg.model.n_heads > 0) {
      cfg.model.d_k = cfg.model.d_model / cfg.model.n_heads;
      cfg.model.d_v = cfg.model.d_k;
    }
    cfg.threads = pl::threads_from_env();
    cfg.log = quiet ? nullptr : &std::cerr;
    pl::run(sub, cfg);
  } catch (const std::exception& e) {
    std::cerr << "c2t " << sub << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
