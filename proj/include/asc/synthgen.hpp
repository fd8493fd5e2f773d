#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asc/audio_io.hpp"
#include "asc/common.hpp"

namespace asc::synth {

struct SceneSpec {
  std::string class_name;
  std::vector<double> band_centers_hz;
  double band_width_hz = 150.0;
  double am_rate_hz = 2.0;
  std::vector<double> tones_hz;
  double base_level_dbfs = -18.0;
};

struct GenerateOptions {
  int64_t num_classes = 5;
  int64_t segments_per_class = 40;
  uint64_t seed = 42;
  double outlier_frac = 0.0;
  bool outlier_mislabel = false;
  double segment_seconds = 10.0;
  int sample_rate_hz = 44100;
};

struct GenerateSummary {
  int64_t num_wavs = 0;
  int64_t num_outliers = 0;
  std::vector<std::string> class_names;
};

// Fixed per-class parameter spread; classes stay apart in band placement,
// tone set, modulation rate, and level.
std::vector<SceneSpec> scene_specs(int64_t num_classes, int sample_rate_hz);

// One synthetic scene segment (pure function of the spec and rng state).
audio::AudioClip synth_segment(const SceneSpec& spec, double seconds, int sample_rate_hz,
                               Rng& rng);

// Writes WAVs plus meta.tsv, labels.txt, fold{1..4}_{train,test}.tsv and
// outliers_truth.tsv into out_dir.
GenerateSummary generate_dataset(const GenerateOptions& opts,
                                 const std::filesystem::path& out_dir);

}  // namespace asc::synth
