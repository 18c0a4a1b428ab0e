#pragma once

#include "c2t/tensor.hpp"

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace c2t::signal {

inline constexpr int kNumChannels = 31;
inline constexpr double kSampleRate = 1000.0;
inline constexpr int kFeaturesPerChannel = 5;
inline constexpr int kFeatureDim = kNumChannels * kFeaturesPerChannel;  // 155
inline constexpr int kWindow = 100;  // 100 ms at 1 kHz
inline constexpr int kHop = 10;      // 10 ms -> 100 Hz frame rate

// 10-20 labels of a 32-electrode cap with the ground electrode removed.
const std::vector<std::string>& default_channel_labels();

struct EegRecording {
  std::string id;
  double sample_rate = kSampleRate;
  std::vector<std::string> channels;
  nn::Matrix samples;  // channel-major: channels x N, microvolts
  std::vector<std::string> transcript;

  nn::Index length() const { return samples.cols(); }
  // Throws unless the recording has 31 labelled channels at 1000 Hz and,
  // when requested, a non-empty transcript.
  void validate(bool require_transcript = true) const;
};

// Direct-form II transposed second-order section, a0 normalised to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  double max_pole_radius() const;
  std::complex<double> response(double omega) const;
};

struct IirFilter {
  std::vector<Biquad> sections;
  std::string description;

  std::complex<double> response(double freq_hz, double sample_rate) const;
  double gain(double freq_hz, double sample_rate) const { return std::abs(response(freq_hz, sample_rate)); }
  double max_pole_radius() const;

  // Causal forward filtering from zero initial state. Throws
  // "signal too short" below 3x the section length.
  std::vector<double> apply(std::span<const double> x) const;
};

IirFilter cascade(const IirFilter& first, const IirFilter& second);

// Digital Butterworth band-pass by bilinear transform with pre-warping.
// A prototype of order n yields n biquads (overall order 2n) with unit gain
// at the geometric centre frequency.
IirFilter design_butterworth_bandpass(double low_hz, double high_hz, double sample_rate,
                                      int prototype_order = 2);

// Second-order notch with quality factor q.
IirFilter design_notch(double center_hz, double q, double sample_rate);

struct PreprocessConfig {
  double low_hz = 0.1;
  double high_hz = 70.0;
  int prototype_order = 2;  // two biquads: 4th-order band-pass
  double notch_hz = 60.0;
  double notch_q = 30.0;
};

// Band-pass then notch, applied to each channel; designed once per call.
IirFilter preprocessing_filter(const PreprocessConfig& cfg = {}, double sample_rate = kSampleRate);
EegRecording preprocess(const EegRecording& rec, const PreprocessConfig& cfg = {});

struct FrameFeatures {
  double rms = 0;
  double zero_crossing_rate = 0;
  double mean = 0;
  double kurtosis = 0;
  double spectral_entropy = 0;
};

// Statistics of one analysis window (length >= 8).
//  rms               sqrt(mean x^2)
//  zero crossings    sign changes / (N - 1), zero counted as positive
//  mean              arithmetic mean of the window
//  kurtosis          m4 / m2^2 (Pearson), 0 for a constant window
//  spectral entropy  Shannon entropy of the normalised one-sided
//                    periodogram over N/2 + 1 bins, divided by log(bins);
//                    0 for an all-zero window
FrameFeatures frame_stats(std::span<const double> window, double sample_rate = kSampleRate);

// T x 155 feature matrix, channel-major (channel 0's five features first).
// T = floor((N - window) / hop) + 1.
nn::Matrix extract_features(const EegRecording& rec, int window = kWindow, int hop = kHop);

}  // namespace c2t::signal
