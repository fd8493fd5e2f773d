#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace asc {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind {
  kUnsupportedFormat,
  kMalformedHeader,
  kEmptyClip,
  kClipTooShort,
  kInvalidRange,
  kDimensionMismatch,
  kWrongBandCount,
  kTooFewFrames,
  kEmptyFeature,
  kShapeMismatch,
  kLabelOutOfRange,
  kNonScalarLoss,
  kMissingGradient,
  kDegenerateBatch,
  kInvalidConfig,
  kEmptySplit,
  kNoPatches,
  kEmptyBank,
  kUnknownLabel,
  kOverlappingFolds,
  kIncompleteFolds,
  kMissingFile,
  kIOFailure,
  kInvalidArgument,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

// IO failures map to exit code 2; everything else is a usage/validation error.
bool is_validation_error(ErrorKind kind);

// ---------------------------------------------------------------------------
// Logging (stderr)

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

void set_log_level(LogLevel level);
void log_message(LogLevel level, const std::string& message);
void log_debug(const std::string& message);
void log_info(const std::string& message);
void log_warn(const std::string& message);

// ---------------------------------------------------------------------------
// Deterministic RNG (xoshiro256++, seeded via splitmix64). Self-contained so
// that streams do not depend on the standard library implementation.

uint64_t splitmix64_next(uint64_t& state);

class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0. Rejection sampling, unbiased.
  int64_t uniform_int(int64_t n);
  // Standard normal via Box-Muller; pairs are cached.
  double normal();

  // Derive an independent stream for (this seed, stream id).
  Rng split(uint64_t stream) const;

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (int64_t i = static_cast<int64_t>(values.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(values[static_cast<size_t>(i)], values[static_cast<size_t>(j)]);
    }
  }

 private:
  std::array<uint64_t, 4> state_{};
  uint64_t seed_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// ---------------------------------------------------------------------------
// Row-major double matrix used by the DSP and GMM paths.

struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}

  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  double* row(int64_t r) { return v.data() + r * cols; }
  const double* row(int64_t r) const { return v.data() + r * cols; }
  int64_t numel() const { return rows * cols; }
};

// ---------------------------------------------------------------------------
// Thread cap shared by module-internal loops. Operators are written so that
// results are bit-identical for any cap.

void set_thread_count(int threads);
int thread_count();

// Runs fn(begin, end) over [0, n) in contiguous chunks, possibly on worker
// threads. Chunks never overlap; fn must not touch state owned by another
// chunk.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

// ---------------------------------------------------------------------------
// Little-endian binary IO

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace bin {

void write_u8(std::ostream& os, uint8_t value);
void write_u16(std::ostream& os, uint16_t value);
void write_u32(std::ostream& os, uint32_t value);
void write_f32(std::ostream& os, float value);
void write_f64(std::ostream& os, double value);
void write_f32_array(std::ostream& os, const float* values, size_t count);
void write_f64_array(std::ostream& os, const double* values, size_t count);

uint8_t read_u8(std::istream& is);
uint16_t read_u16(std::istream& is);
uint32_t read_u32(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_f32_array(std::istream& is, float* values, size_t count);
void read_f64_array(std::istream& is, double* values, size_t count);

}  // namespace bin

// printf-style formatting into std::string.
std::string strf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace asc
