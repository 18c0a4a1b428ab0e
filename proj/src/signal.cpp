#include "c2t/signal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace c2t::signal {

using nn::Index;
using cplx = std::complex<double>;

const std::vector<std::string>& default_channel_labels() {
  static const std::vector<std::string> labels = {
      "Fp1", "Fz",  "F3",  "F7",  "FT9", "FC5", "FC1", "C3",  "T7",  "TP9", "CP5",
      "CP1", "Pz",  "P3",  "P7",  "O1",  "Oz",  "O2",  "P4",  "P8",  "TP10", "CP6",
      "CP2", "Cz",  "C4",  "T8",  "FC6", "FC2", "F4",  "F8",  "Fp2"};
  return labels;
}

void EegRecording::validate(bool require_transcript) const {
  if (sample_rate != kSampleRate) {
    throw Error("recording " + id + ": sample rate must be 1000 Hz");
  }
  if (samples.rows() != kNumChannels || static_cast<int>(channels.size()) != kNumChannels) {
    throw Error("recording " + id + ": expected 31 channels, got " + std::to_string(samples.rows()));
  }
  if (require_transcript && transcript.empty()) {
    throw Error("recording " + id + ": empty transcript");
  }
}

double Biquad::max_pole_radius() const {
  // roots of z^2 + a1 z + a2
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  const cplx r1 = (-a1 + disc) / 2.0, r2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

std::complex<double> Biquad::response(double omega) const {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::complex<double> IirFilter::response(double freq_hz, double sample_rate) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  cplx h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double IirFilter::max_pole_radius() const {
  double r = 0.0;
  for (const auto& s : sections) r = std::max(r, s.max_pole_radius());
  return r;
}

std::vector<double> IirFilter::apply(std::span<const double> x) const {
  if (x.size() < 9) throw Error("signal too short");
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

IirFilter cascade(const IirFilter& first, const IirFilter& second) {
  IirFilter f;
  f.sections = first.sections;
  f.sections.insert(f.sections.end(), second.sections.begin(), second.sections.end());
  f.description = first.description + " + " + second.description;
  return f;
}

namespace {

Biquad section_from_poles(cplx p1, cplx p2) {
  // zeros at z = 1 and z = -1: numerator 1 - z^-2
  Biquad s;
  s.b0 = 1.0;
  s.b1 = 0.0;
  s.b2 = -1.0;
  s.a1 = -(p1 + p2).real();
  s.a2 = (p1 * p2).real();
  return s;
}

void check_stable(const IirFilter& f) {
  const double r = f.max_pole_radius();
  if (!(r < 1.0)) {
    throw Error("filter design produced an unstable section (pole radius " + std::to_string(r) + ")");
  }
}

}  // namespace

IirFilter design_butterworth_bandpass(double low_hz, double high_hz, double sample_rate,
                                      int prototype_order) {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate / 2.0)) {
    throw Error("band-pass: need 0 < low < high < Nyquist");
  }
  if (prototype_order < 1) throw Error("band-pass: prototype order must be >= 1");
  const double fs2 = 2.0 * sample_rate;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;
  const int n = prototype_order;

  auto bilinear = [fs2](cplx s) { return (fs2 + s) / (fs2 - s); };

  IirFilter f;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
    if (p.imag() < -1e-12) continue;  // handled with its conjugate
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    const cplx r1 = bilinear((pb + disc) / 2.0);
    const cplx r2 = bilinear((pb - disc) / 2.0);
    if (std::abs(p.imag()) <= 1e-12) {
      f.sections.push_back(section_from_poles(r1, r2));
    } else {
      f.sections.push_back(section_from_poles(r1, std::conj(r1)));
      f.sections.push_back(section_from_poles(r2, std::conj(r2)));
    }
  }

  // unit gain at the digital image of the analog centre frequency
  const double f0 = sample_rate / std::numbers::pi * std::atan(w0 / fs2);
  const double g = f.gain(f0, sample_rate);
  f.sections[0].b0 /= g;
  f.sections[0].b1 /= g;
  f.sections[0].b2 /= g;

  f.description = "butterworth band-pass " + std::to_string(low_hz) + "-" + std::to_string(high_hz) +
                  " Hz, order " + std::to_string(2 * n);
  check_stable(f);
  return f;
}

IirFilter design_notch(double center_hz, double q, double sample_rate) {
  if (!(center_hz > 0.0 && center_hz < sample_rate / 2.0) || !(q > 0.0)) {
    throw Error("notch: need 0 < centre < Nyquist and q > 0");
  }
  const double w0 = 2.0 * std::numbers::pi * center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  IirFilter f;
  f.sections.push_back(s);
  f.description = "notch " + std::to_string(center_hz) + " Hz, Q " + std::to_string(q);
  check_stable(f);
  return f;
}

IirFilter preprocessing_filter(const PreprocessConfig& cfg, double sample_rate) {
  return cascade(design_butterworth_bandpass(cfg.low_hz, cfg.high_hz, sample_rate, cfg.prototype_order),
                 design_notch(cfg.notch_hz, cfg.notch_q, sample_rate));
}

EegRecording preprocess(const EegRecording& rec, const PreprocessConfig& cfg) {
  rec.validate(false);
  const IirFilter filter = preprocessing_filter(cfg, rec.sample_rate);
  EegRecording out = rec;
  for (Index c = 0; c < rec.samples.rows(); ++c) {
    std::span<const double> row(rec.samples.row(c).data(), static_cast<std::size_t>(rec.length()));
    const auto y = filter.apply(row);
    for (Index i = 0; i < rec.length(); ++i) out.samples(c, i) = y[static_cast<std::size_t>(i)];
  }
  return out;
}

namespace {

struct DftTable {
  std::vector<double> cos, sin;  // index (k * n) mod N
};

const DftTable& dft_table(std::size_t n) {
  thread_local std::map<std::size_t, DftTable> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  DftTable t;
  t.cos.resize(n);
  t.sin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    t.cos[i] = std::cos(a);
    t.sin[i] = std::sin(a);
  }
  return cache.emplace(n, std::move(t)).first->second;
}

}  // namespace

FrameFeatures frame_stats(std::span<const double> x, double /*sample_rate*/) {
  const std::size_t n = x.size();
  if (n < 8) throw Error("frame_stats: window shorter than 8 samples");
  const double dn = static_cast<double>(n);
  FrameFeatures f;

  double s = 0.0, s2 = 0.0;
  for (double v : x) {
    s += v;
    s2 += v * v;
  }
  f.mean = s / dn;
  f.rms = std::sqrt(s2 / dn);

  std::size_t crossings = 0;
  for (std::size_t i = 1; i < n; ++i) crossings += (x[i] >= 0.0) != (x[i - 1] >= 0.0);
  f.zero_crossing_rate = static_cast<double>(crossings) / (dn - 1.0);

  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - f.mean) * (v - f.mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= dn;
  m4 /= dn;
  // Rounding in the mean leaves a residue of order 1e-32 * x^2 for
  // constant windows; anything that small is treated as zero variance.
  f.kurtosis = (m2 <= 1e-24 * (s2 / dn)) ? 0.0 : m4 / (m2 * m2);

  const DftTable& t = dft_table(n);
  const std::size_t bins = n / 2 + 1;
  thread_local std::vector<double> power;
  power.assign(bins, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      re += x[i] * t.cos[idx];
      im -= x[i] * t.sin[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    power[k] = re * re + im * im;
    total += power[k];
  }
  if (total > 0.0) {
    double h = 0.0;
    for (double p : power) {
      if (p > 0.0) {
        const double q = p / total;
        h -= q * std::log(q);
      }
    }
    f.spectral_entropy = std::clamp(h / std::log(static_cast<double>(bins)), 0.0, 1.0);
  }
  return f;
}

nn::Matrix extract_features(const EegRecording& rec, int window, int hop) {
  if (window < 8 || hop < 1) throw Error("extract_features: invalid window/hop");
  const Index n = rec.length();
  if (n < window) throw Error("recording shorter than one analysis window");
  const Index frames = (n - window) / hop + 1;
  const Index channels = rec.samples.rows();
  nn::Matrix out(frames, channels * kFeaturesPerChannel);
  for (Index c = 0; c < channels; ++c) {
    const double* row = rec.samples.row(c).data();
    for (Index t = 0; t < frames; ++t) {
      const auto f = frame_stats(std::span<const double>(row + t * hop, static_cast<std::size_t>(window)),
                                 rec.sample_rate);
      const Index base = c * kFeaturesPerChannel;
      out(t, base + 0) = f.rms;
      out(t, base + 1) = f.zero_crossing_rate;
      out(t, base + 2) = f.mean;
      out(t, base + 3) = f.kurtosis;
      out(t, base + 4) = f.spectral_entropy;
    }
  }
  return out;
}

}  // namespace c2t::signal
