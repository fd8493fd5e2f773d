#include "asc/audio_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "asc/common.hpp"

namespace asc::audio {

namespace {

constexpr uint16_t kFormatPcm = 1;

struct ByteReader {
  const uint8_t* p;
  size_t size;
  size_t pos = 0;

  bool has(size_t n) const { return pos + n <= size; }

  uint32_t u32() {
    if (!has(4)) raise(ErrorKind::kMalformedHeader, "truncated WAV header");
    uint32_t v;
    std::memcpy(&v, p + pos, 4);
    pos += 4;
    return v;
  }

  uint16_t u16() {
    if (!has(2)) raise(ErrorKind::kMalformedHeader, "truncated WAV header");
    uint16_t v;
    std::memcpy(&v, p + pos, 2);
    pos += 2;
    return v;
  }

  void fourcc(char out[4]) {
    if (!has(4)) raise(ErrorKind::kMalformedHeader, "truncated WAV header");
    std::memcpy(out, p + pos, 4);
    pos += 4;
  }

  void skip(size_t n) {
    if (!has(n)) raise(ErrorKind::kMalformedHeader, "chunk size exceeds file size");
    pos += n;
  }
};

inline bool tag_is(const char tag[4], const char* want) { return std::memcmp(tag, want, 4) == 0; }

// Signed little-endian 3-byte integer.
inline int32_t read_s24(const uint8_t* p) {
  int32_t v = static_cast<int32_t>(p[0]) | (static_cast<int32_t>(p[1]) << 8) |
              (static_cast<int32_t>(p[2]) << 16);
  if (v & 0x800000) v -= 0x1000000;
  return v;
}

}  // namespace

AudioClip decode_wav(const std::vector<uint8_t>& bytes, const std::string& source_id) {
  ByteReader r{bytes.data(), bytes.size()};

  char tag[4];
  r.fourcc(tag);
  if (!tag_is(tag, "RIFF")) raise(ErrorKind::kMalformedHeader, "missing RIFF tag: " + source_id);
  const uint32_t riff_size = r.u32();  // counts everything after this field
  if (static_cast<size_t>(riff_size) + 8 > bytes.size())
    raise(ErrorKind::kMalformedHeader, "RIFF size exceeds file size: " + source_id);
  r.fourcc(tag);
  if (!tag_is(tag, "WAVE")) raise(ErrorKind::kMalformedHeader, "missing WAVE tag: " + source_id);

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data_ptr = nullptr;
  size_t data_size = 0;

  while (r.pos < r.size) {
    if (!r.has(8)) raise(ErrorKind::kMalformedHeader, "truncated chunk header: " + source_id);
    r.fourcc(tag);
    const uint32_t chunk_size = r.u32();
    if (!r.has(chunk_size)) raise(ErrorKind::kMalformedHeader, "chunk size exceeds file size: " + source_id);
    if (tag_is(tag, "fmt ")) {
      if (chunk_size < 16) raise(ErrorKind::kMalformedHeader, "fmt chunk too small: " + source_id);
      const size_t fmt_end = r.pos + chunk_size;
      format = r.u16();
      channels = r.u16();
      sample_rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      r.pos = fmt_end;
      have_fmt = true;
    } else if (tag_is(tag, "data")) {
      data_ptr = r.p + r.pos;
      data_size = chunk_size;
      r.skip(chunk_size);
    } else {
      r.skip(chunk_size);
    }
    if (chunk_size % 2 == 1 && r.has(1)) r.skip(1);  // RIFF pad byte
  }

  if (!have_fmt || data_ptr == nullptr)
    raise(ErrorKind::kMalformedHeader, "missing fmt or data chunk: " + source_id);
  if (format != kFormatPcm)
    raise(ErrorKind::kUnsupportedFormat,
          strf("WAV format code %u is not integer PCM: %s", format, source_id.c_str()));
  if (bits != 16 && bits != 24)
    raise(ErrorKind::kUnsupportedFormat,
          strf("%u-bit PCM not supported (need 16 or 24): %s", bits, source_id.c_str()));
  if (channels != 1 && channels != 2)
    raise(ErrorKind::kUnsupportedFormat,
          strf("%u channels not supported (need 1 or 2): %s", channels, source_id.c_str()));
  if (sample_rate == 0) raise(ErrorKind::kMalformedHeader, "zero sample rate: " + source_id);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  if (data_size % frame_bytes != 0)
    raise(ErrorKind::kMalformedHeader, "data chunk not a whole number of frames: " + source_id);
  const size_t num_frames = data_size / frame_bytes;

  const double scale = 1.0 / static_cast<double>(1 << (bits - 1));
  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(sample_rate);
  clip.source_id = source_id;
  clip.samples.resize(num_frames);

  for (size_t i = 0; i < num_frames; ++i) {
    const uint8_t* frame = data_ptr + i * frame_bytes;
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* s = frame + c * bytes_per_sample;
      int32_t value;
      if (bits == 16) {
        int16_t v16;
        std::memcpy(&v16, s, 2);
        value = v16;
      } else {
        value = read_s24(s);
      }
      acc += static_cast<double>(value) * scale;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

AudioClip decode_wav_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.filename().string());
}

std::vector<uint8_t> encode_wav(const AudioClip& clip, int bits_per_sample) {
  if (bits_per_sample != 16 && bits_per_sample != 24)
    raise(ErrorKind::kUnsupportedFormat, "encode supports 16 or 24 bit PCM");
  if (clip.sample_rate_hz <= 0) raise(ErrorKind::kInvalidArgument, "sample rate must be positive");

  const int bytes_per_sample = bits_per_sample / 8;
  const size_t data_size = clip.samples.size() * static_cast<size_t>(bytes_per_sample);
  const uint32_t riff_size = static_cast<uint32_t>(36 + data_size);
  const double full_scale = static_cast<double>(1 << (bits_per_sample - 1));
  const int64_t max_code = static_cast<int64_t>(full_scale) - 1;
  const int64_t min_code = -static_cast<int64_t>(full_scale);

  std::vector<uint8_t> out;
  out.reserve(44 + data_size);
  auto push_u32 = [&out](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  auto push_u16 = [&out](uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
  };
  auto push_tag = [&out](const char* t) { out.insert(out.end(), t, t + 4); };

  push_tag("RIFF");
  push_u32(riff_size);
  push_tag("WAVE");
  push_tag("fmt ");
  push_u32(16);
  push_u16(kFormatPcm);
  push_u16(1);  // mono
  push_u32(static_cast<uint32_t>(clip.sample_rate_hz));
  push_u32(static_cast<uint32_t>(clip.sample_rate_hz * bytes_per_sample));
  push_u16(static_cast<uint16_t>(bytes_per_sample));
  push_u16(static_cast<uint16_t>(bits_per_sample));
  push_tag("data");
  push_u32(static_cast<uint32_t>(data_size));

  for (double x : clip.samples) {
    int64_t code = static_cast<int64_t>(std::llround(x * full_scale));
    if (code > max_code) code = max_code;
    if (code < min_code) code = min_code;
    for (int i = 0; i < bytes_per_sample; ++i)
      out.push_back(static_cast<uint8_t>(static_cast<uint64_t>(code) >> (8 * i)));
  }
  return out;
}

void encode_wav_file(const std::filesystem::path& path, const AudioClip& clip, int bits_per_sample) {
  const std::vector<uint8_t> bytes = encode_wav(clip, bits_per_sample);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) raise(ErrorKind::kIOFailure, "write failed: " + path.string());
}

std::vector<AudioClip> segment_clip(const AudioClip& clip, double segment_s) {
  if (clip.samples.empty()) raise(ErrorKind::kEmptyClip, "cannot segment empty clip: " + clip.source_id);
  if (!(segment_s > 0.0)) raise(ErrorKind::kInvalidArgument, "segment length must be positive");

  const auto window = static_cast<size_t>(std::llround(segment_s * clip.sample_rate_hz));
  if (window == 0) raise(ErrorKind::kInvalidArgument, "segment length rounds to zero samples");

  const size_t count = clip.samples.size() / window;
  if (count == 0)
    log_warn(strf("EmptySegmentation: %s is shorter than one %.3f s window", clip.source_id.c_str(),
                  segment_s));

  std::vector<AudioClip> segments;
  segments.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    AudioClip seg;
    seg.sample_rate_hz = clip.sample_rate_hz;
    seg.source_id = clip.source_id + "#" + std::to_string(i);
    seg.samples.assign(clip.samples.begin() + static_cast<int64_t>(i * window),
                       clip.samples.begin() + static_cast<int64_t>((i + 1) * window));
    segments.push_back(std::move(seg));
  }
  return segments;
}

double rms_dbfs(const AudioClip& clip) {
  if (clip.samples.empty()) raise(ErrorKind::kEmptyClip, "rms of empty clip: " + clip.source_id);
  double acc = 0.0;
  for (double x : clip.samples) acc += x * x;
  const double rms = std::sqrt(acc / static_cast<double>(clip.samples.size()));
  return 20.0 * std::log10(rms + 1e-12);
}

}  // namespace asc::audio
