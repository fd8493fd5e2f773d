#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace asc::audio {

// Decoded mono waveform. Samples are floats in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 0;
  std::string source_id;

  double duration_seconds() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

// Parses a RIFF/WAVE container holding integer PCM (16 or 24 bit, 1 or 2
// channels). Integer samples are scaled by 1/2^(bits-1); stereo is downmixed
// by the per-sample mean of the channels.
AudioClip decode_wav(const std::vector<uint8_t>& bytes, const std::string& source_id);
AudioClip decode_wav_file(const std::filesystem::path& path);

// Serializes a clip as integer PCM WAV. bits_per_sample is 16 or 24; samples
// are quantized by round(x * 2^(bits-1)) and clamped to the integer range.
std::vector<uint8_t> encode_wav(const AudioClip& clip, int bits_per_sample);
void encode_wav_file(const std::filesystem::path& path, const AudioClip& clip, int bits_per_sample);

// Cuts a clip into consecutive non-overlapping windows of
// round(segment_s * sample_rate_hz) samples. A trailing remainder shorter
// than one window is discarded. Children get source_id "<parent>#<index>".
std::vector<AudioClip> segment_clip(const AudioClip& clip, double segment_s);

// Root-mean-square level in dBFS: 20*log10(rms + 1e-12).
double rms_dbfs(const AudioClip& clip);

}  // namespace asc::audio
