"""Python bindings for the c2t EEG-to-text pipeline."""

from ._core import (
    EOS,
    NUM_CHANNELS,
    PAD,
    SAMPLE_RATE,
    SOS,
    Error,
    IirFilter,
    KpcaModel,
    NgramLm,
    RunConfig,
    Transformer,
    TransformerConfig,
    Vocabulary,
    append_deltas,
    beam_search,
    corpus_wer,
    design_butterworth_bandpass,
    design_notch,
    extract_features,
    fit_kpca,
    generate_synthetic,
    preprocessing_filter,
    run,
    small_model_config,
    split,
    subcommands,
    tokenize,
    wer,
)

__all__ = [name for name in dir() if not name.startswith("_")]
