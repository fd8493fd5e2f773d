#include "asc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace asc::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr int kSinusoidsPerBand = 8;

// Phase-rotating oscillator: one complex multiply per sample, no sin() calls
// in the inner loop.
struct Osc {
  double c, s;    // current phase as (cos, sin)
  double dc, ds;  // per-sample rotation
  double amp;
  Osc(double freq_hz, double phase, double amplitude, int sr) {
    c = std::cos(phase);
    s = std::sin(phase);
    const double step = kTwoPi * freq_hz / sr;
    dc = std::cos(step);
    ds = std::sin(step);
    amp = amplitude;
  }
  double tick() {
    const double out = amp * s;
    const double nc = c * dc - s * ds;
    s = s * dc + c * ds;
    c = nc;
    return out;
  }
};

}  // namespace

std::vector<SceneSpec> scene_specs(int64_t num_classes, int sample_rate_hz) {
  const double nyquist = sample_rate_hz / 2.0;
  std::vector<SceneSpec> specs;
  for (int64_t i = 0; i < num_classes; ++i) {
    SceneSpec s;
    s.class_name = strf("scene%02lld", static_cast<long long>(i));
    s.band_centers_hz = {std::fmin(250.0 + 380.0 * i, nyquist * 0.45),
                         std::fmin(900.0 + 520.0 * i, nyquist * 0.9)};
    s.band_width_hz = 120.0 + 30.0 * static_cast<double>(i % 3);
    s.am_rate_hz = 2.0 + 1.7 * static_cast<double>(i);
    s.tones_hz = {std::fmin(500.0 + 310.0 * i, nyquist * 0.6),
                  std::fmin(1200.0 + 450.0 * i, nyquist * 0.95)};
    s.base_level_dbfs = -18.0 - 3.0 * static_cast<double>(i % 4);
    specs.push_back(std::move(s));
  }
  return specs;
}

audio::AudioClip synth_segment(const SceneSpec& spec, double seconds, int sample_rate_hz,
                               Rng& rng) {
  const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate_hz));
  std::vector<Osc> oscs;
  for (double center : spec.band_centers_hz)
    for (int j = 0; j < kSinusoidsPerBand; ++j) {
      const double f = center + spec.band_width_hz * (rng.uniform() - 0.5);
      oscs.emplace_back(f, kTwoPi * rng.uniform(),
                        0.6 / (kSinusoidsPerBand * spec.band_centers_hz.size()),
                        sample_rate_hz);
    }
  for (double f : spec.tones_hz)
    oscs.emplace_back(f, kTwoPi * rng.uniform(), 0.35 / spec.tones_hz.size(), sample_rate_hz);
  Osc am(spec.am_rate_hz, kTwoPi * rng.uniform(), 1.0, sample_rate_hz);

  audio::AudioClip clip;
  clip.sample_rate_hz = sample_rate_hz;
  clip.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double x = 0.0;
    for (auto& o : oscs) x += o.tick();
    const double env = (1.0 + 0.5 * am.tick()) / 1.5;
    clip.samples[static_cast<size_t>(i)] = env * x + 0.01 * (2.0 * rng.uniform() - 1.0);
  }

  // Scale to the scene's base level, then back off if quantization would clip.
  double rms = 0.0;
  for (double v : clip.samples) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(n));
  double scale = std::pow(10.0, spec.base_level_dbfs / 20.0) / (rms + 1e-12);
  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak * scale > 0.99) scale = 0.99 / peak;
  for (auto& v : clip.samples) v *= scale;
  return clip;
}

GenerateSummary generate_dataset(const GenerateOptions& opts, const fs::path& out_dir) {
  if (opts.num_classes < 2)
    raise(ErrorKind::kInvalidArgument, "generate_dataset: need at least 2 classes");
  if (opts.segments_per_class < 8)
    raise(ErrorKind::kInvalidArgument,
          "generate_dataset: need at least 8 segments per class for 4 folds");

  const int64_t C = opts.num_classes;
  const int64_t S = opts.segments_per_class;
  const int64_t total = C * S;
  const auto specs = scene_specs(C, opts.sample_rate_hz);

  // Counts per test fold, to size "training-destined" = the smallest train split.
  std::vector<int64_t> test_count(4, 0);
  for (int64_t i = 0; i < S; ++i) ++test_count[static_cast<size_t>(i % 4)];
  for (auto& v : test_count) v *= C;
  const int64_t largest_test = *std::max_element(test_count.begin(), test_count.end());
  const int64_t train_destined = total - largest_test;
  const int64_t num_outliers = static_cast<int64_t>(
      std::floor(opts.outlier_frac * static_cast<double>(train_destined) + 1e-9));

  // Mark outliers round-robin over (test fold, host class) so each fold's
  // train split carries at most a ratio-sized share of them. The last class
  // never hosts one: it serves as the mislabel target, so a label polluted by
  // outlier content never also owns silent segments of its own.
  const int64_t host_classes = C - 1;
  std::vector<std::vector<bool>> is_outlier(
      static_cast<size_t>(C), std::vector<bool>(static_cast<size_t>(S), false));
  for (int64_t j = 0; j < num_outliers; ++j) {
    const int64_t fold = j % 4;
    const int64_t cls = (j / 4) % host_classes;
    const int64_t occurrence = j / (4 * host_classes);
    const int64_t idx = fold + 4 * occurrence;
    if (idx >= S)
      raise(ErrorKind::kInvalidArgument, "outlier_frac too large for this dataset size");
    is_outlier[static_cast<size_t>(cls)][static_cast<size_t>(idx)] = true;
  }

  Rng master(opts.seed);
  GenerateSummary summary;
  summary.num_outliers = num_outliers;

  fs::create_directories(out_dir);
  std::ofstream meta(out_dir / "meta.tsv", std::ios::trunc);
  std::ofstream truth(out_dir / "outliers_truth.tsv", std::ios::trunc);
  if (!meta || !truth) raise(ErrorKind::kIOFailure, "cannot write dataset metadata");
  truth << "segment_id\tis_outlier\ttrue_label\n";
  std::vector<std::ofstream> fold_train, fold_test;
  for (int f = 1; f <= 4; ++f) {
    fold_train.emplace_back(out_dir / strf("fold%d_train.tsv", f), std::ios::trunc);
    fold_test.emplace_back(out_dir / strf("fold%d_test.tsv", f), std::ios::trunc);
    if (!fold_train.back() || !fold_test.back())
      raise(ErrorKind::kIOFailure, "cannot write fold files");
  }

  for (int64_t c = 0; c < C; ++c) {
    const auto& spec = specs[static_cast<size_t>(c)];
    summary.class_names.push_back(spec.class_name);
    fs::create_directories(out_dir / spec.class_name);
    for (int64_t i = 0; i < S; ++i) {
      const std::string rel = spec.class_name + strf("/seg%03lld.wav", static_cast<long long>(i));
      Rng rng = master.split(static_cast<uint64_t>(c * S + i));

      audio::AudioClip clip;
      const bool outlier = is_outlier[static_cast<size_t>(c)][static_cast<size_t>(i)];
      if (outlier) {
        // Near-constant: DC offset plus amplitude-1e-4 noise; both the
        // variance and the magnitude statistic put these at the bottom.
        const int64_t n = static_cast<int64_t>(
            std::llround(opts.segment_seconds * opts.sample_rate_hz));
        clip.sample_rate_hz = opts.sample_rate_hz;
        clip.samples.resize(static_cast<size_t>(n));
        for (auto& v : clip.samples) v = 0.01 + 1e-4 * (2.0 * rng.uniform() - 1.0);
      } else {
        clip = synth_segment(spec, opts.segment_seconds, opts.sample_rate_hz, rng);
      }
      audio::encode_wav_file(out_dir / rel, clip, 16);
      ++summary.num_wavs;

      std::string label = spec.class_name;
      if (outlier && opts.outlier_mislabel)
        label = specs[static_cast<size_t>(C - 1)].class_name;
      meta << rel << '\t' << label << '\n';

      const std::string segment_id =
          rel.substr(0, rel.size() - 4) + "#0";  // 10 s clips make one segment
      truth << segment_id << '\t' << (outlier ? 1 : 0) << '\t' << spec.class_name << '\n';

      const int64_t test_fold = i % 4;
      for (int64_t f = 0; f < 4; ++f) {
        if (f == test_fold)
          fold_test[static_cast<size_t>(f)] << rel << '\n';
        else
          fold_train[static_cast<size_t>(f)] << rel << '\n';
      }
    }
  }

  std::ofstream labels(out_dir / "labels.txt", std::ios::trunc);
  if (!labels) raise(ErrorKind::kIOFailure, "cannot write labels.txt");
  for (const auto& name : summary.class_names) labels << name << '\n';
  return summary;
}

}  // namespace asc::synth
