#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"

#include "asc/common.hpp"
#include "asc/dsp.hpp"

using namespace asc;
using audio::AudioClip;

namespace {

constexpr double kPi = 3.14159265358979323846;

AudioClip make_clip(int sr, double seconds, const std::function<double(int64_t)>& fn) {
  AudioClip clip;
  clip.sample_rate_hz = sr;
  clip.source_id = "c";
  int64_t n = static_cast<int64_t>(std::llround(seconds * sr));
  clip.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) clip.samples[static_cast<size_t>(i)] = fn(i);
  return clip;
}

dsp::FeatureRecord make_record(int64_t rows, int64_t cols,
                               const std::function<float(int64_t, int64_t)>& fn) {
  dsp::FeatureRecord rec;
  rec.segment_id = "r";
  rec.label = "l";
  rec.kind = dsp::FeatureKind::kLogMel;
  rec.rows = rows;
  rec.cols = cols;
  rec.data.resize(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) rec.at(r, c) = fn(r, c);
  return rec;
}

}  // namespace

TEST_CASE("stft framing at 44.1 kHz, 40 ms, half overlap") {
  auto clip = make_clip(44100, 10.0, [](int64_t) { return 0.25; });
  auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
  CHECK(spec.frame_len == 1764);
  CHECK(spec.hop_len == 882);
  CHECK(spec.n_fft == 2048);
  CHECK(spec.n_bins() == 1025);
  CHECK(spec.n_frames() == 499);  // 1 + floor((441000 - 1764) / 882)

  // DC input: energy concentrated at bin 0. Zero-padding 1764 -> 2048
  // stretches the window mainlobe over bins 1-2 and leaves sidelobes near
  // 0.6% of DC, so the bound here is loose; the unpadded case below is tight.
  for (int64_t t : {int64_t(0), spec.n_frames() / 2, spec.n_frames() - 1}) {
    double dc = spec.magnitudes.at(t, 0);
    REQUIRE(dc > 0.0);
    for (int64_t b = 1; b < spec.n_bins(); ++b) CHECK(spec.magnitudes.at(t, b) < dc);
    for (int64_t b = 2; b < spec.n_bins(); ++b)
      CHECK(spec.magnitudes.at(t, b) < 0.05 * dc);
  }
}

TEST_CASE("stft of a constant concentrates in bin 0 when the frame needs no padding") {
  // 40 ms at 12.8 kHz is exactly 512 samples, so n_fft == frame_len.
  auto clip = make_clip(12800, 1.0, [](int64_t) { return 0.25; });
  auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
  CHECK(spec.frame_len == 512);
  CHECK(spec.n_fft == 512);
  double dc = spec.magnitudes.at(0, 0);
  for (int64_t b = 2; b < spec.n_bins(); ++b) CHECK(spec.magnitudes.at(0, b) < 1e-3 * dc);
}

TEST_CASE("stft frame count formula holds for randomized lengths") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    int sr = 8000;
    int64_t frame_len = 320, hop = 160;
    int64_t len = frame_len + rng.uniform_int(40000);
    AudioClip clip;
    clip.sample_rate_hz = sr;
    clip.samples.assign(static_cast<size_t>(len), 0.01);
    auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
    CHECK(spec.n_frames() == 1 + (len - frame_len) / hop);
  }
}

TEST_CASE("stft rejects bad input") {
  auto clip = make_clip(44100, 0.01, [](int64_t) { return 0.1; });  // 441 < 1764
  CHECK_THROWS_AS(dsp::stft_magnitude(clip, 40.0, 0.5), Error);
  auto ok = make_clip(44100, 1.0, [](int64_t) { return 0.1; });
  CHECK_THROWS_AS(dsp::stft_magnitude(ok, 40.0, 1.0), Error);
  CHECK_THROWS_AS(dsp::stft_magnitude(ok, 40.0, -0.1), Error);
}

TEST_CASE("mel scale formula") {
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  for (double hz : {0.0, 100.0, 1000.0, 8000.0, 22050.0})
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
}

TEST_CASE("mel filterbank rows peak at one with widening support") {
  auto fb = dsp::mel_filterbank(44100, 2048, 40, 0.0, 22050.0);
  REQUIRE(fb.weights.rows == 40);
  REQUIRE(fb.weights.cols == 1025);

  std::vector<int64_t> peak_bins, widths;
  for (int64_t m = 0; m < 40; ++m) {
    double peak = 0.0;
    int64_t peak_bin = -1, width = 0;
    for (int64_t b = 0; b < fb.weights.cols; ++b) {
      double w = fb.weights.at(m, b);
      CHECK(w >= 0.0);
      if (w > 0.0) ++width;
      if (w > peak) {
        peak = w;
        peak_bin = b;
      }
    }
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-6));
    peak_bins.push_back(peak_bin);
    widths.push_back(width);
  }
  for (size_t m = 1; m < 40; ++m) {
    CHECK(peak_bins[m] > peak_bins[m - 1]);
    CHECK(widths[m] >= widths[m - 1]);
  }
  CHECK(widths.back() > widths.front());

  // adjacent rows overlap: some bin carries weight in both triangles (row m+1
  // starts exactly at row m's center, so m's peak bin itself may be zero there)
  for (size_t m = 0; m + 1 < 40; ++m) {
    bool shares = false;
    for (int64_t b = 0; b < fb.weights.cols; ++b)
      if (fb.weights.at(static_cast<int64_t>(m), b) > 0.0 &&
          fb.weights.at(static_cast<int64_t>(m) + 1, b) > 0.0)
        shares = true;
    CHECK(shares);
  }
}

TEST_CASE("mel filterbank validates its range") {
  CHECK_THROWS_AS(dsp::mel_filterbank(44100, 2048, 40, 22050.0, 22050.0), Error);
  CHECK_THROWS_AS(dsp::mel_filterbank(44100, 2048, 40, -1.0, 22050.0), Error);
  CHECK_THROWS_AS(dsp::mel_filterbank(44100, 2048, 1, 0.0, 22050.0), Error);
  // too many bands for the FFT resolution -> some row would be empty
  CHECK_THROWS_AS(dsp::mel_filterbank(8000, 64, 64, 0.0, 4000.0), Error);
}

TEST_CASE("log_mel of silence is the log floor") {
  auto clip = make_clip(12800, 1.0, [](int64_t) { return 0.0; });
  auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
  auto fb = dsp::mel_filterbank(12800, spec.n_fft, 40, 0.0, 6400.0);
  auto rec = dsp::log_mel(spec, fb, 1e-10, "sil", "x");
  CHECK(rec.rows == 40);
  CHECK(rec.cols == spec.n_frames());
  for (float v : rec.data) CHECK(v == doctest::Approx(std::log(1e-10)).epsilon(1e-6));
  CHECK(std::log(1e-10) == doctest::Approx(-23.026).epsilon(1e-4));
}

TEST_CASE("doubling amplitude shifts log_mel by ln 4") {
  auto quiet = make_clip(12800, 1.0,
                         [](int64_t i) { return 0.2 * std::sin(2 * kPi * 500.0 * i / 12800); });
  auto loud = make_clip(12800, 1.0,
                        [](int64_t i) { return 0.4 * std::sin(2 * kPi * 500.0 * i / 12800); });
  auto sq = dsp::stft_magnitude(quiet, 40.0, 0.5);
  auto sl = dsp::stft_magnitude(loud, 40.0, 0.5);
  auto fb = dsp::mel_filterbank(12800, sq.n_fft, 40, 0.0, 6400.0);
  auto rq = dsp::log_mel(sq, fb, 1e-10, "q", "x");
  auto rl = dsp::log_mel(sl, fb, 1e-10, "l", "x");
  int checked = 0;
  for (size_t i = 0; i < rq.data.size(); ++i) {
    if (rq.data[i] > -5.0f) {  // energy far above the floor
      CHECK(static_cast<double>(rl.data[i]) - rq.data[i] ==
            doctest::Approx(std::log(4.0)).epsilon(1e-5));
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("a 1 kHz tone peaks in the band centered nearest 1 kHz") {
  auto clip = make_clip(44100, 1.0,
                        [](int64_t i) { return 0.5 * std::sin(2 * kPi * 1000.0 * i / 44100); });
  auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
  auto fb = dsp::mel_filterbank(44100, spec.n_fft, 40, 0.0, 22050.0);
  auto rec = dsp::log_mel(spec, fb, 1e-10, "tone", "x");

  // band centers via each row's peak bin
  int64_t nearest = -1;
  double best = 1e18;
  for (int64_t m = 0; m < 40; ++m) {
    int64_t peak_bin = 0;
    for (int64_t b = 1; b < fb.weights.cols; ++b)
      if (fb.weights.at(m, b) > fb.weights.at(m, peak_bin)) peak_bin = b;
    double hz = static_cast<double>(peak_bin) * 44100.0 / 2048.0;
    if (std::abs(hz - 1000.0) < best) {
      best = std::abs(hz - 1000.0);
      nearest = m;
    }
  }
  int64_t max_row = 0, max_col = 0;
  for (int64_t r = 0; r < rec.rows; ++r)
    for (int64_t c = 0; c < rec.cols; ++c)
      if (rec.at(r, c) > rec.at(max_row, max_col)) {
        max_row = r;
        max_col = c;
      }
  CHECK(max_row == nearest);
}

TEST_CASE("log_mel rejects mismatched filterbank") {
  auto clip = make_clip(12800, 1.0, [](int64_t) { return 0.1; });
  auto spec = dsp::stft_magnitude(clip, 40.0, 0.5);
  auto fb = dsp::mel_filterbank(12800, 1024, 40, 0.0, 6400.0);  // wrong n_fft
  CHECK_THROWS_AS(dsp::log_mel(spec, fb, 1e-10, "m", "x"), Error);
}

TEST_CASE("mfcc of a constant frame is a scaled dc coefficient") {
  const float c = -23.026f;
  auto rec = make_record(40, 3, [&](int64_t, int64_t) { return c; });
  Mat coeffs = dsp::mfcc_frames(rec);
  REQUIRE(coeffs.rows == 3);
  REQUIRE(coeffs.cols == 20);
  for (int64_t t = 0; t < 3; ++t) {
    CHECK(coeffs.at(t, 0) ==
          doctest::Approx(static_cast<double>(c) * std::sqrt(40.0)).epsilon(1e-6));
    for (int64_t k = 1; k < 20; ++k) CHECK(std::abs(coeffs.at(t, k)) < 1e-9);
  }
}

TEST_CASE("mfcc picks out a pure first-mode cosine") {
  auto rec = make_record(40, 1, [](int64_t m, int64_t) {
    return static_cast<float>(std::cos(kPi * (m + 0.5) / 40.0));
  });
  Mat coeffs = dsp::mfcc_frames(rec);
  CHECK(coeffs.at(0, 1) == doctest::Approx(std::sqrt(2.0 / 40.0) * 20.0).epsilon(1e-5));
  for (int64_t k = 0; k < 20; ++k)
    if (k != 1) CHECK(std::abs(coeffs.at(0, k)) < 1e-4);
}

TEST_CASE("mfcc matches a brute-force transform and conserves energy") {
  Rng rng(31);
  auto rec = make_record(40, 6, [&](int64_t, int64_t) {
    return static_cast<float>(rng.uniform(-2.0, 2.0));
  });
  Mat coeffs = dsp::mfcc_frames(rec);
  for (int64_t t = 0; t < rec.cols; ++t) {
    double energy_in = 0.0, energy_out = 0.0;
    for (int64_t k = 0; k < 40; ++k) {
      double s = k == 0 ? std::sqrt(1.0 / 40.0) : std::sqrt(2.0 / 40.0);
      double ck = 0.0;
      for (int64_t m = 0; m < 40; ++m)
        ck += static_cast<double>(rec.at(m, t)) * std::cos(kPi * k * (m + 0.5) / 40.0);
      ck *= s;
      energy_out += ck * ck;
      if (k < 20) CHECK(coeffs.at(t, k) == doctest::Approx(ck).epsilon(1e-9));
    }
    for (int64_t m = 0; m < 40; ++m)
      energy_in += static_cast<double>(rec.at(m, t)) * rec.at(m, t);
    CHECK(energy_out == doctest::Approx(energy_in).epsilon(1e-9));
  }
}

TEST_CASE("mfcc rejects wrong band counts") {
  auto rec = make_record(41, 2, [](int64_t, int64_t) { return 0.0f; });
  CHECK_THROWS_AS(dsp::mfcc_frames(rec), Error);
}

TEST_CASE("deltas of a constant sequence vanish") {
  Mat coeffs(10, 20);
  for (auto& v : coeffs.v) v = 3.25;
  Mat full = dsp::delta_features(coeffs);
  REQUIRE(full.rows == 10);
  REQUIRE(full.cols == 60);
  for (int64_t t = 0; t < 10; ++t)
    for (int64_t c = 20; c < 60; ++c) CHECK(full.at(t, c) == doctest::Approx(0.0));
}

TEST_CASE("delta of a linear ramp is one at interior frames") {
  Mat coeffs(20, 20);
  for (int64_t t = 0; t < 20; ++t)
    for (int64_t c = 0; c < 20; ++c) coeffs.at(t, c) = static_cast<double>(t);
  Mat full = dsp::delta_features(coeffs);
  // (1*2 + 2*4 + 3*6 + 4*8) / (2*(1+4+9+16)) = 60/60
  for (int64_t t = 4; t < 16; ++t)
    for (int64_t c = 20; c < 40; ++c)
      CHECK(full.at(t, c) == doctest::Approx(1.0).epsilon(1e-12));
  // deltas are constant away from the edges, so interior accelerations vanish
  for (int64_t t = 8; t < 12; ++t)
    for (int64_t c = 40; c < 60; ++c)
      CHECK(full.at(t, c) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("deltas match a brute-force regression with edge replication") {
  Rng rng(17);
  Mat coeffs(20, 20);
  for (auto& v : coeffs.v) v = rng.uniform(-1.0, 1.0);
  Mat full = dsp::delta_features(coeffs);

  auto clamp = [&](int64_t t) { return std::min<int64_t>(19, std::max<int64_t>(0, t)); };
  Mat delta(20, 20), accel(20, 20);
  for (int64_t t = 0; t < 20; ++t)
    for (int64_t c = 0; c < 20; ++c) {
      double num = 0.0;
      for (int64_t n = 1; n <= 4; ++n)
        num += n * (coeffs.at(clamp(t + n), c) - coeffs.at(clamp(t - n), c));
      delta.at(t, c) = num / 60.0;
    }
  for (int64_t t = 0; t < 20; ++t)
    for (int64_t c = 0; c < 20; ++c) {
      double num = 0.0;
      for (int64_t n = 1; n <= 4; ++n)
        num += n * (delta.at(clamp(t + n), c) - delta.at(clamp(t - n), c));
      accel.at(t, c) = num / 60.0;
    }
  for (int64_t t = 0; t < 20; ++t)
    for (int64_t c = 0; c < 20; ++c) {
      CHECK(full.at(t, c) == doctest::Approx(coeffs.at(t, c)).epsilon(1e-12));
      CHECK(full.at(t, c + 20) == doctest::Approx(delta.at(t, c)).epsilon(1e-12));
      CHECK(full.at(t, c + 40) == doctest::Approx(accel.at(t, c)).epsilon(1e-12));
    }
}

TEST_CASE("patchify cuts along time and drops the remainder") {
  Rng rng(8);
  auto rec = make_record(128, 499, [&](int64_t, int64_t) {
    return static_cast<float>(rng.uniform(-1.0, 1.0));
  });
  rec.segment_id = "seg";
  auto patches = dsp::patchify(rec, 128);
  REQUIRE(patches.size() == 3);
  for (size_t p = 0; p < 3; ++p) {
    CHECK(patches[p].segment_id == "seg@" + std::to_string(p));
    CHECK(patches[p].rows == 128);
    CHECK(patches[p].cols == 128);
    for (int64_t r = 0; r < 128; ++r)
      for (int64_t c = 0; c < 128; ++c)
        CHECK(patches[p].at(r, c) == rec.at(r, static_cast<int64_t>(p) * 128 + c));
  }

  auto exact = make_record(128, 128, [](int64_t r, int64_t c) {
    return static_cast<float>(r * 1000 + c);
  });
  auto one = dsp::patchify(exact, 128);
  REQUIRE(one.size() == 1);
  CHECK(one[0].data == exact.data);

  auto tiny = make_record(128, 127, [](int64_t, int64_t) { return 0.0f; });
  CHECK_THROWS_AS(dsp::patchify(tiny, 128), Error);
}

TEST_CASE("feature pipeline is deterministic") {
  auto clip = make_clip(12800, 1.0, [](int64_t i) {
    return 0.3 * std::sin(2 * kPi * 700.0 * i / 12800) +
           0.1 * std::sin(2 * kPi * 2100.0 * i / 12800);
  });
  auto fb = dsp::mel_filterbank(12800, 512, 40, 0.0, 6400.0);
  auto a = dsp::log_mel(dsp::stft_magnitude(clip, 40.0, 0.5), fb, 1e-10, "a", "x");
  auto b = dsp::log_mel(dsp::stft_magnitude(clip, 40.0, 0.5), fb, 1e-10, "a", "x");
  CHECK(a.data == b.data);
}
