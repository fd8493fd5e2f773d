#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asc/audio_io.hpp"
#include "asc/common.hpp"

namespace asc::dsp {

// Magnitude short-time spectrum. magnitudes is [n_frames x n_bins] with
// n_bins = n_fft/2 + 1.
struct Spectrogram {
  Mat magnitudes;
  int frame_len = 0;
  int hop_len = 0;
  int n_fft = 0;

  int64_t n_frames() const { return magnitudes.rows; }
  int64_t n_bins() const { return magnitudes.cols; }
};

// Triangular filters on the mel scale, one row per band, evaluated at FFT bin
// center frequencies and rescaled so every row peaks at exactly 1.
struct MelFilterbank {
  Mat weights;  // [n_mels x n_bins]
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
  int n_mels = 0;

  int64_t n_bins() const { return weights.cols; }
};

enum class FeatureKind { kLogMel, kMfcc };

const char* feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);

// A labeled feature matrix for one segment. Log-mel records are
// [n_mels x n_frames]; MFCC records are [n_frames x 60].
struct FeatureRecord {
  std::string segment_id;
  std::string label;  // textual label, "unlabeled" when unknown
  FeatureKind kind = FeatureKind::kLogMel;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;  // row-major
  double sample_variance = 0.0;

  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
};

// mel(f) = 2595 * log10(1 + f/700) and its inverse.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Hamming-windowed magnitude STFT. frame_len = round(frame_ms/1000 * sr),
// hop = round(frame_len * (1 - overlap)), n_fft = next power of two >=
// frame_len (frames zero-padded).
Spectrogram stft_magnitude(const audio::AudioClip& clip, double frame_ms, double overlap);

MelFilterbank mel_filterbank(int sample_rate_hz, int n_fft, int n_mels, double fmin_hz,
                             double fmax_hz);

// Log mel energies: ln(weights * magnitudes^2 + floor_eps), [n_mels x n_frames].
FeatureRecord log_mel(const Spectrogram& spec, const MelFilterbank& fb, double floor_eps,
                      const std::string& segment_id, const std::string& label);

// Orthonormal DCT-II over 40 log-mel bands per frame, keeping coefficients
// 0..19. Input must be a 40-row log-mel record; output is [n_frames x 20].
Mat mfcc_frames(const FeatureRecord& logmel40);

// Appends regression deltas and accelerations computed over a 9-frame window
// (half-window 4, edges replicated): output is [T x 3*C] for input [T x C].
Mat delta_features(const Mat& coeffs, int window_frames = 9);

// Cuts a [128 x T] log-mel record into non-overlapping [128 x patch_frames]
// patches along time; the remainder is dropped.
std::vector<FeatureRecord> patchify(const FeatureRecord& logmel, int64_t patch_frames = 128);

}  // namespace asc::dsp
