#include "c2t/beam.hpp"
#include "c2t/container.hpp"
#include "c2t/corpus.hpp"
#include "c2t/kpca.hpp"
#include "c2t/ngram.hpp"
#include "c2t/pipeline.hpp"
#include "c2t/signal.hpp"
#include "c2t/transformer.hpp"
#include "c2t/wer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace c2t;
using nn::Matrix;

namespace {

signal::EegRecording recording_from(const Matrix& samples, double sample_rate) {
  signal::EegRecording rec;
  rec.id = "array";
  rec.sample_rate = sample_rate;
  rec.samples = samples;
  rec.channels = signal::default_channel_labels();
  rec.validate(false);
  return rec;
}

py::dict wer_dict(const metrics::WerResult& r) {
  py::dict d;
  d["substitutions"] = r.substitutions;
  d["deletions"] = r.deletions;
  d["insertions"] = r.insertions;
  d["ref_length"] = r.ref_length;
  d["errors"] = r.errors();
  d["wer"] = r.wer();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EEG-to-text transformer pipeline: filtering, features, kernel PCA, model, decoding and scoring.";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.attr("PAD") = model::kPad;
  m.attr("SOS") = model::kSos;
  m.attr("EOS") = model::kEos;
  m.attr("SAMPLE_RATE") = signal::kSampleRate;
  m.attr("NUM_CHANNELS") = signal::kNumChannels;

  // signal
  py::class_<signal::IirFilter>(m, "IirFilter")
      .def("gain", &signal::IirFilter::gain, py::arg("freq_hz"), py::arg("sample_rate") = signal::kSampleRate)
      .def("max_pole_radius", &signal::IirFilter::max_pole_radius)
      .def("apply", [](const signal::IirFilter& f, const std::vector<double>& x) { return f.apply(x); })
      .def_property_readonly("num_sections", [](const signal::IirFilter& f) { return f.sections.size(); })
      .def_readonly("description", &signal::IirFilter::description);
  m.def("design_butterworth_bandpass", &signal::design_butterworth_bandpass, py::arg("low_hz"), py::arg("high_hz"),
        py::arg("sample_rate") = signal::kSampleRate, py::arg("prototype_order") = 2);
  m.def("design_notch", &signal::design_notch, py::arg("center_hz"), py::arg("q"),
        py::arg("sample_rate") = signal::kSampleRate);
  m.def("preprocessing_filter", [] { return signal::preprocessing_filter(); });
  m.def(
      "extract_features",
      [](const Matrix& samples, bool preprocess, double sample_rate) {
        auto rec = recording_from(samples, sample_rate);
        return signal::extract_features(preprocess ? signal::preprocess(rec) : rec);
      },
      py::arg("samples"), py::arg("preprocess") = true, py::arg("sample_rate") = signal::kSampleRate,
      "31 x N microvolt samples -> T x 155 frame statistics.");

  // reduce
  py::class_<reduce::KpcaModel>(m, "KpcaModel")
      .def_readonly("n_components", &reduce::KpcaModel::n_components)
      .def_readonly("eigenvalues", &reduce::KpcaModel::eigenvalues)
      .def_property_readonly("num_landmarks", [](const reduce::KpcaModel& k) { return k.landmarks.rows(); })
      .def("transform", [](const reduce::KpcaModel& k, const Matrix& x) { return reduce::kpca_transform(k, x); })
      .def("cumulative_explained_variance", &reduce::KpcaModel::cumulative_explained_variance);
  m.def(
      "fit_kpca",
      [](const Matrix& frames, int n_components, int max_landmarks, std::uint64_t seed, bool standardize, int degree,
         double gamma, double offset) {
        reduce::KpcaOptions o;
        o.n_components = n_components;
        o.max_landmarks = max_landmarks;
        o.seed = seed;
        o.standardize = standardize;
        o.kernel = {degree, gamma, offset};
        return reduce::fit_kpca(frames, o);
      },
      py::arg("frames"), py::arg("n_components") = 30, py::arg("max_landmarks") = 2000, py::arg("seed") = 0,
      py::arg("standardize") = true, py::arg("degree") = 3, py::arg("gamma") = 1.0 / 155.0, py::arg("offset") = 1.0);
  m.def("append_deltas", &reduce::append_deltas, py::arg("seq"), py::arg("half_window") = 2);

  // model
  py::class_<model::TransformerConfig>(m, "TransformerConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &model::TransformerConfig::d_model)
      .def_readwrite("n_enc_layers", &model::TransformerConfig::n_enc_layers)
      .def_readwrite("n_dec_layers", &model::TransformerConfig::n_dec_layers)
      .def_readwrite("n_heads", &model::TransformerConfig::n_heads)
      .def_readwrite("d_k", &model::TransformerConfig::d_k)
      .def_readwrite("d_v", &model::TransformerConfig::d_v)
      .def_readwrite("d_ff", &model::TransformerConfig::d_ff)
      .def_readwrite("input_dim", &model::TransformerConfig::input_dim)
      .def_readwrite("vocab_size", &model::TransformerConfig::vocab_size)
      .def_readwrite("max_src_len", &model::TransformerConfig::max_src_len)
      .def_readwrite("max_tgt_len", &model::TransformerConfig::max_tgt_len)
      .def_readwrite("dropout", &model::TransformerConfig::dropout)
      .def_readwrite("tie_output_embedding", &model::TransformerConfig::tie_output_embedding)
      .def("validate", &model::TransformerConfig::validate)
      .def("__repr__", &model::TransformerConfig::to_string);
  m.def("small_model_config", &pipeline::small_model_config);

  py::class_<model::Transformer>(m, "Transformer")
      .def(py::init<const model::TransformerConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return model::Transformer::from_container(load_container(p)); })
      .def("save", [](const model::Transformer& t, const std::filesystem::path& p) { save_container(p, t.to_container()); })
      .def_property_readonly("config", &model::Transformer::config)
      .def("parameter_count", &model::Transformer::parameter_count)
      .def("loss",
           [](const model::Transformer& t, const Matrix& features, const std::vector<int>& targets) {
             nn::NoGradGuard guard;
             return t.loss(features, targets).item();
           })
      .def("logits",
           [](const model::Transformer& t, const Matrix& features, const std::vector<int>& tokens) {
             nn::NoGradGuard guard;
             return Matrix(t.decode(tokens, t.encode(features)).value());
           })
      .def("train",
           [](model::Transformer& t, const std::vector<std::pair<Matrix, std::vector<int>>>& data, int epochs,
              int batch_size, double lr, std::uint64_t seed) {
             std::vector<model::Example> set;
             for (std::size_t i = 0; i < data.size(); ++i) set.push_back({std::to_string(i), data[i].first, data[i].second});
             model::TrainConfig tc;
             tc.epochs = epochs;
             tc.batch_size = batch_size;
             tc.lr = lr;
             tc.seed = seed;
             std::vector<double> losses;
             {
               py::gil_scoped_release release;
               for (const auto& e : model::train(t, set, {}, tc).history) losses.push_back(e.train_loss);
             }
             return losses;
           },
           py::arg("examples"), py::arg("epochs"), py::arg("batch_size") = 100, py::arg("lr") = 1e-4,
           py::arg("seed") = 0, "Trains on (features, word ids) pairs; returns per-epoch training loss.");

  // language model
  py::class_<lm::NgramLm>(m, "NgramLm")
      .def_static(
          "fit",
          [](const std::vector<std::vector<int>>& s, int v, int n, double a) { return lm::NgramLm::fit(s, v, n, a); },
          py::arg("sentences"), py::arg("vocab_size"), py::arg("order") = 4,
                  py::arg("alpha") = 0.4)
      .def("logprob", [](const lm::NgramLm& l, int word, const std::vector<int>& history) { return l.logprob(word, history); })
      .def_property_readonly("order", &lm::NgramLm::order)
      .def_property_readonly("vocab_size", &lm::NgramLm::vocab_size)
      .def("dumps", [](const lm::NgramLm& l) {
        std::ostringstream out;
        l.save(out);
        return out.str();
      })
      .def_static("loads", [](const std::string& s) {
        std::istringstream in(s);
        return lm::NgramLm::load(in);
      });

  // decoding
  m.def(
      "beam_search",
      [](const model::Transformer& t, const Matrix& features, const lm::NgramLm* lm, int beam_width,
         double lm_weight, int max_len, bool length_normalize) {
        decode::DecodeConfig cfg;
        cfg.beam_width = beam_width;
        cfg.lm_weight = lm_weight;
        cfg.max_len = max_len;
        cfg.length_normalize = length_normalize;
        decode::TransformerScorer scorer(t, features);
        const auto r = decode::beam_search(scorer, lm, cfg);
        return py::make_tuple(r.words, r.score, r.truncated);
      },
      py::arg("model"), py::arg("features"), py::arg("lm") = nullptr, py::arg("beam_width") = 10,
      py::arg("lm_weight") = 0.3, py::arg("max_len") = 32, py::arg("length_normalize") = false,
      "Returns (word ids, fused score, truncated).");

  // metrics
  m.def(
      "wer",
      [](const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
        return wer_dict(metrics::wer(std::span<const std::string>(ref), std::span<const std::string>(hyp)));
      },
      py::arg("reference"), py::arg("hypothesis"));
  m.def(
      "corpus_wer",
      [](const std::vector<std::tuple<std::string, std::vector<std::string>, std::vector<std::string>>>& items) {
        std::vector<metrics::UtterancePair> pairs;
        for (const auto& [id, r, h] : items) pairs.push_back({id, r, h});
        const auto c = metrics::corpus_wer(pairs);
        py::dict d = wer_dict(c.pooled);
        d["macro_wer"] = c.macro_wer;
        return d;
      },
      py::arg("pairs"), "Pooled counts over (id, reference, hypothesis) triples.");

  // data
  py::class_<data::Vocabulary>(m, "Vocabulary")
      .def_static("build", [](const std::vector<data::Sentence>& s) { return data::Vocabulary::build(s); })
      .def("__len__", &data::Vocabulary::size)
      .def("id", &data::Vocabulary::id)
      .def("word", &data::Vocabulary::word)
      .def("encode", [](const data::Vocabulary& v, const data::Sentence& s) { return v.encode(s); })
      .def("decode", [](const data::Vocabulary& v, const std::vector<int>& ids) { return v.decode(ids); });
  m.def("tokenize", &data::tokenize);
  m.def(
      "split",
      [](std::size_t n, std::uint64_t seed) {
        data::SplitSpec spec;
        spec.seed = seed;
        const auto s = data::split(n, spec);
        return py::make_tuple(s.train, s.validation, s.test);
      },
      py::arg("n"), py::arg("seed") = 0, "Seeded 80/10/10 partition of range(n).");
  m.def(
      "generate_synthetic",
      [](const std::vector<data::Sentence>& sentences, int repetitions, std::uint64_t seed, double noise_level) {
        data::SynthConfig cfg;
        cfg.repetitions = repetitions;
        cfg.seed = seed;
        cfg.noise_level = noise_level;
        py::list out;
        for (const auto& u : data::generate_synthetic(sentences, cfg)) {
          out.append(py::make_tuple(u.recording.id, u.recording.samples, u.recording.transcript));
        }
        return out;
      },
      py::arg("sentences"), py::arg("repetitions") = 3, py::arg("seed") = 0, py::arg("noise_level") = 0.5,
      "Returns (id, 31 x N samples, transcript) per utterance.");

  // pipeline
  py::class_<pipeline::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("corpus", &pipeline::RunConfig::corpus)
      .def_readwrite("out_dir", &pipeline::RunConfig::out_dir)
      .def_readwrite("seed", &pipeline::RunConfig::seed)
      .def_readwrite("repetitions", &pipeline::RunConfig::repetitions)
      .def_readwrite("noise_level", &pipeline::RunConfig::noise_level)
      .def_readwrite("kpca_components", &pipeline::RunConfig::kpca_components)
      .def_readwrite("max_landmarks", &pipeline::RunConfig::max_landmarks)
      .def_readwrite("standardize", &pipeline::RunConfig::standardize)
      .def_readwrite("model", &pipeline::RunConfig::model)
      .def_property(
          "epochs", [](const pipeline::RunConfig& c) { return c.train.epochs; },
          [](pipeline::RunConfig& c, int v) { c.train.epochs = v; })
      .def_property(
          "batch_size", [](const pipeline::RunConfig& c) { return c.train.batch_size; },
          [](pipeline::RunConfig& c, int v) { c.train.batch_size = v; })
      .def_property(
          "lr", [](const pipeline::RunConfig& c) { return c.train.lr; }, [](pipeline::RunConfig& c, double v) { c.train.lr = v; })
      .def_property(
          "beam_width", [](const pipeline::RunConfig& c) { return c.decode.beam_width; },
          [](pipeline::RunConfig& c, int v) { c.decode.beam_width = v; })
      .def_property(
          "lm_weight", [](const pipeline::RunConfig& c) { return c.decode.lm_weight; },
          [](pipeline::RunConfig& c, double v) { c.decode.lm_weight = v; })
      .def_property(
          "max_len", [](const pipeline::RunConfig& c) { return c.decode.max_len; },
          [](pipeline::RunConfig& c, int v) { c.decode.max_len = v; })
      .def_readwrite("split", &pipeline::RunConfig::split)
      .def_readwrite("subset_k", &pipeline::RunConfig::subset_k)
      .def_readwrite("threads", &pipeline::RunConfig::threads)
      .def_readwrite("timing", &pipeline::RunConfig::timing);
  m.def(
      "run",
      [](const std::string& subcommand, const pipeline::RunConfig& cfg) {
        py::gil_scoped_release release;
        pipeline::run(subcommand, cfg);
      },
      py::arg("subcommand"), py::arg("config"));
  m.def("subcommands", &pipeline::subcommands);
}
