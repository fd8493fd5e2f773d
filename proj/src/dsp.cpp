#include "asc/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>

namespace asc::dsp {

namespace {

// Iterative radix-2 FFT over a power-of-two length, with precomputed
// twiddles. Plans are cached per size; callers hold no state.
class FftPlan {
 public:
  explicit FftPlan(int n) : n_(n) {
    const int levels = std::countr_zero(static_cast<unsigned>(n));
    bit_reverse_.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      unsigned rev = 0;
      for (int b = 0; b < levels; ++b)
        if (i & (1 << b)) rev |= 1u << (levels - 1 - b);
      bit_reverse_[static_cast<size_t>(i)] = static_cast<int>(rev);
    }
    twiddle_.resize(static_cast<size_t>(n / 2));
    for (int k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * k / n;
      twiddle_[static_cast<size_t>(k)] = {std::cos(angle), std::sin(angle)};
    }
  }

  void transform(std::vector<std::complex<double>>& buf) const {
    for (int i = 0; i < n_; ++i) {
      const int j = bit_reverse_[static_cast<size_t>(i)];
      if (j > i) std::swap(buf[static_cast<size_t>(i)], buf[static_cast<size_t>(j)]);
    }
    for (int len = 2; len <= n_; len <<= 1) {
      const int stride = n_ / len;
      for (int start = 0; start < n_; start += len) {
        for (int k = 0; k < len / 2; ++k) {
          const std::complex<double> w = twiddle_[static_cast<size_t>(k * stride)];
          auto& a = buf[static_cast<size_t>(start + k)];
          auto& b = buf[static_cast<size_t>(start + k + len / 2)];
          const std::complex<double> t = w * b;
          b = a - t;
          a = a + t;
        }
      }
    }
  }

 private:
  int n_;
  std::vector<int> bit_reverse_;
  std::vector<std::complex<double>> twiddle_;
};

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

const char* feature_kind_name(FeatureKind kind) {
  return kind == FeatureKind::kLogMel ? "logmel" : "mfcc";
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "logmel") return FeatureKind::kLogMel;
  if (name == "mfcc") return FeatureKind::kMfcc;
  raise(ErrorKind::kInvalidArgument, "unknown feature kind: " + name);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram stft_magnitude(const audio::AudioClip& clip, double frame_ms, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0))
    raise(ErrorKind::kInvalidArgument, "overlap must be in [0, 1)");
  const int frame_len = static_cast<int>(std::llround(frame_ms / 1000.0 * clip.sample_rate_hz));
  if (frame_len < 2) raise(ErrorKind::kInvalidArgument, "frame length under 2 samples");
  const int hop = static_cast<int>(std::llround(frame_len * (1.0 - overlap)));
  if (hop < 1) raise(ErrorKind::kInvalidArgument, "hop rounds to zero samples");
  const auto total = static_cast<int64_t>(clip.samples.size());
  if (total < frame_len)
    raise(ErrorKind::kClipTooShort,
          strf("clip %s has %lld samples, frame needs %d", clip.source_id.c_str(),
               static_cast<long long>(total), frame_len));

  const int n_fft = next_pow2(frame_len);
  const int n_bins = n_fft / 2 + 1;
  const int64_t n_frames = 1 + (total - frame_len) / hop;

  std::vector<double> window(static_cast<size_t>(frame_len));
  for (int n = 0; n < frame_len; ++n)
    window[static_cast<size_t>(n)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (frame_len - 1));

  const FftPlan plan(n_fft);

  Spectrogram spec;
  spec.frame_len = frame_len;
  spec.hop_len = hop;
  spec.n_fft = n_fft;
  spec.magnitudes = Mat(n_frames, n_bins);

  parallel_for(n_frames, [&](int64_t begin, int64_t end) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
    for (int64_t f = begin; f < end; ++f) {
      const int64_t offset = f * hop;
      for (int n = 0; n < frame_len; ++n)
        buf[static_cast<size_t>(n)] = {
            clip.samples[static_cast<size_t>(offset + n)] * window[static_cast<size_t>(n)], 0.0};
      for (int n = frame_len; n < n_fft; ++n) buf[static_cast<size_t>(n)] = {0.0, 0.0};
      plan.transform(buf);
      double* out = spec.magnitudes.row(f);
      for (int k = 0; k < n_bins; ++k) out[k] = std::abs(buf[static_cast<size_t>(k)]);
    }
  });
  return spec;
}

MelFilterbank mel_filterbank(int sample_rate_hz, int n_fft, int n_mels, double fmin_hz,
                             double fmax_hz) {
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0))
    raise(ErrorKind::kInvalidRange,
          strf("need 0 <= fmin < fmax <= sr/2, got fmin=%g fmax=%g sr=%d", fmin_hz, fmax_hz,
               sample_rate_hz));
  if (n_mels < 2) raise(ErrorKind::kInvalidRange, "n_mels must be at least 2");

  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);

  // n_mels + 2 boundary points, uniform in mel; filter r spans points
  // r, r+1, r+2 (left edge, center, right edge).
  std::vector<double> edge_hz(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edge_hz[static_cast<size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  MelFilterbank fb;
  fb.fmin_hz = fmin_hz;
  fb.fmax_hz = fmax_hz;
  fb.n_mels = n_mels;
  fb.weights = Mat(n_mels, n_bins);

  const double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;
  int previous_peak_bin = -1;
  for (int r = 0; r < n_mels; ++r) {
    const double left = edge_hz[static_cast<size_t>(r)];
    const double center = edge_hz[static_cast<size_t>(r) + 1];
    const double right = edge_hz[static_cast<size_t>(r) + 2];
    double* row = fb.weights.row(r);
    double peak = 0.0;
    int peak_bin = -1;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > left && f < right)
        w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      row[k] = w;
      if (w > peak) {
        peak = w;
        peak_bin = k;
      }
    }
    if (peak <= 0.0)
      raise(ErrorKind::kInvalidRange,
            strf("mel band %d has no FFT bin inside its support; n_mels=%d is too large for "
                 "n_fft=%d at sr=%d",
                 r, n_mels, n_fft, sample_rate_hz));
    if (peak_bin <= previous_peak_bin)
      raise(ErrorKind::kInvalidRange,
            strf("mel bands %d and %d peak at the same FFT bin; n_mels=%d is too large for "
                 "n_fft=%d at sr=%d",
                 r - 1, r, n_mels, n_fft, sample_rate_hz));
    previous_peak_bin = peak_bin;
    const double inv = 1.0 / peak;
    for (int k = 0; k < n_bins; ++k) row[k] *= inv;
  }
  return fb;
}

FeatureRecord log_mel(const Spectrogram& spec, const MelFilterbank& fb, double floor_eps,
                      const std::string& segment_id, const std::string& label) {
  if (fb.n_bins() != spec.n_bins())
    raise(ErrorKind::kDimensionMismatch,
          strf("filterbank has %lld bins, spectrogram has %lld",
               static_cast<long long>(fb.n_bins()), static_cast<long long>(spec.n_bins())));

  const int64_t n_frames = spec.n_frames();
  const int64_t n_bins = spec.n_bins();
  const int64_t n_mels = fb.n_mels;

  FeatureRecord rec;
  rec.segment_id = segment_id;
  rec.label = label;
  rec.kind = FeatureKind::kLogMel;
  rec.rows = n_mels;
  rec.cols = n_frames;
  rec.data.resize(static_cast<size_t>(n_mels * n_frames));

  parallel_for(n_frames, [&](int64_t begin, int64_t end) {
    for (int64_t t = begin; t < end; ++t) {
      const double* mag = spec.magnitudes.row(t);
      for (int64_t m = 0; m < n_mels; ++m) {
        const double* w = fb.weights.row(m);
        double energy = 0.0;
        for (int64_t k = 0; k < n_bins; ++k) energy += w[k] * mag[k] * mag[k];
        rec.data[static_cast<size_t>(m * n_frames + t)] =
            static_cast<float>(std::log(energy + floor_eps));
      }
    }
  });
  return rec;
}

Mat mfcc_frames(const FeatureRecord& logmel40) {
  if (logmel40.kind != FeatureKind::kLogMel)
    raise(ErrorKind::kWrongBandCount, "mfcc_frames expects a log-mel record");
  const int64_t n_mels = logmel40.rows;
  if (n_mels != 40)
    raise(ErrorKind::kWrongBandCount,
          strf("mfcc_frames expects 40 mel bands, got %lld", static_cast<long long>(n_mels)));

  const int64_t n_frames = logmel40.cols;
  constexpr int kKeep = 20;
  const double s0 = std::sqrt(1.0 / 40.0);
  const double sk = std::sqrt(2.0 / 40.0);

  // DCT-II basis, row k evaluated at band centers m + 0.5.
  Mat basis(kKeep, n_mels);
  for (int k = 0; k < kKeep; ++k)
    for (int64_t m = 0; m < n_mels; ++m)
      basis.at(k, m) = (k == 0 ? s0 : sk) * std::cos(std::numbers::pi * k * (m + 0.5) / 40.0);

  Mat out(n_frames, kKeep);
  for (int64_t t = 0; t < n_frames; ++t) {
    for (int k = 0; k < kKeep; ++k) {
      double acc = 0.0;
      const double* b = basis.row(k);
      for (int64_t m = 0; m < n_mels; ++m)
        acc += b[m] * static_cast<double>(logmel40.at(m, t));
      out.at(t, k) = acc;
    }
  }
  return out;
}

Mat delta_features(const Mat& coeffs, int window_frames) {
  if (coeffs.rows < 1) raise(ErrorKind::kInvalidArgument, "need at least one frame");
  if (window_frames < 3 || window_frames % 2 == 0)
    raise(ErrorKind::kInvalidArgument, "delta window must be an odd length >= 3");

  const int half = (window_frames - 1) / 2;
  double denom = 0.0;
  for (int n = 1; n <= half; ++n) denom += static_cast<double>(n) * n;
  denom *= 2.0;

  const int64_t T = coeffs.rows;
  const int64_t C = coeffs.cols;
  auto clamp_frame = [T](int64_t t) { return std::clamp<int64_t>(t, 0, T - 1); };

  auto regress = [&](const Mat& in) {
    Mat d(T, C);
    for (int64_t t = 0; t < T; ++t) {
      for (int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int n = 1; n <= half; ++n)
          acc += n * (in.at(clamp_frame(t + n), c) - in.at(clamp_frame(t - n), c));
        d.at(t, c) = acc / denom;
      }
    }
    return d;
  };

  const Mat delta = regress(coeffs);
  const Mat accel = regress(delta);

  Mat out(T, 3 * C);
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      out.at(t, c) = coeffs.at(t, c);
      out.at(t, C + c) = delta.at(t, c);
      out.at(t, 2 * C + c) = accel.at(t, c);
    }
  }
  return out;
}

std::vector<FeatureRecord> patchify(const FeatureRecord& logmel, int64_t patch_frames) {
  if (logmel.kind != FeatureKind::kLogMel)
    raise(ErrorKind::kInvalidArgument, "patchify expects a log-mel record");
  if (logmel.cols < patch_frames)
    raise(ErrorKind::kTooFewFrames,
          strf("record %s has %lld frames, patch needs %lld", logmel.segment_id.c_str(),
               static_cast<long long>(logmel.cols), static_cast<long long>(patch_frames)));

  const int64_t count = logmel.cols / patch_frames;
  std::vector<FeatureRecord> patches;
  patches.reserve(static_cast<size_t>(count));
  for (int64_t p = 0; p < count; ++p) {
    FeatureRecord patch;
    patch.segment_id = logmel.segment_id + "@" + std::to_string(p);
    patch.label = logmel.label;
    patch.kind = FeatureKind::kLogMel;
    patch.rows = logmel.rows;
    patch.cols = patch_frames;
    patch.sample_variance = logmel.sample_variance;
    patch.data.resize(static_cast<size_t>(logmel.rows * patch_frames));
    for (int64_t r = 0; r < logmel.rows; ++r)
      for (int64_t c = 0; c < patch_frames; ++c)
        patch.at(r, c) = logmel.at(r, p * patch_frames + c);
    patches.push_back(std::move(patch));
  }
  return patches;
}

}  // namespace asc::dsp
