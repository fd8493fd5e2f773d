#include "asc/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <mutex>
#include <thread>

namespace asc {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::kMalformedHeader: return "MalformedHeader";
    case ErrorKind::kEmptyClip: return "EmptyClip";
    case ErrorKind::kClipTooShort: return "ClipTooShort";
    case ErrorKind::kInvalidRange: return "InvalidRange";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kWrongBandCount: return "WrongBandCount";
    case ErrorKind::kTooFewFrames: return "TooFewFrames";
    case ErrorKind::kEmptyFeature: return "EmptyFeature";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::kNonScalarLoss: return "NonScalarLoss";
    case ErrorKind::kMissingGradient: return "MissingGradient";
    case ErrorKind::kDegenerateBatch: return "DegenerateBatch";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kEmptySplit: return "EmptySplit";
    case ErrorKind::kNoPatches: return "NoPatches";
    case ErrorKind::kEmptyBank: return "EmptyBank";
    case ErrorKind::kUnknownLabel: return "UnknownLabel";
    case ErrorKind::kOverlappingFolds: return "OverlappingFolds";
    case ErrorKind::kIncompleteFolds: return "IncompleteFolds";
    case ErrorKind::kMissingFile: return "MissingFile";
    case ErrorKind::kIOFailure: return "IOFailure";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

bool is_validation_error(ErrorKind kind) {
  return kind != ErrorKind::kIOFailure;
}

// ---------------------------------------------------------------------------

namespace {
std::atomic<int> g_log_level{static_cast<int>(LogLevel::kInfo)};
std::mutex g_log_mutex;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
  }
  return "?";
}
}  // namespace

void set_log_level(LogLevel level) { g_log_level.store(static_cast<int>(level)); }

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) < g_log_level.load()) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[" << level_tag(level) << "] " << message << "\n";
}

void log_debug(const std::string& message) { log_message(LogLevel::kDebug, message); }
void log_info(const std::string& message) { log_message(LogLevel::kInfo, message); }
void log_warn(const std::string& message) { log_message(LogLevel::kWarn, message); }

// ---------------------------------------------------------------------------

uint64_t splitmix64_next(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed) {
  uint64_t sm = seed;
  for (auto& word : state_) word = splitmix64_next(sm);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl64(state_[0] + state_[3], 23) + state_[0];
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) raise(ErrorKind::kInvalidArgument, "uniform_int requires n > 0");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split(uint64_t stream) const {
  uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL);
  return Rng(splitmix64_next(sm));
}

// ---------------------------------------------------------------------------

namespace {
std::atomic<int> g_thread_count{1};
}

void set_thread_count(int threads) {
  if (threads < 1) threads = 1;
  g_thread_count.store(threads);
}

int thread_count() { return g_thread_count.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int threads = std::min<int64_t>(thread_count(), n);
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  const int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const int64_t begin = t * chunk;
    const int64_t end = std::min<int64_t>(begin + chunk, n);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& worker : workers) worker.join();
}

// ---------------------------------------------------------------------------

namespace bin {

namespace {
template <typename T>
void write_raw(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  if (!os) raise(ErrorKind::kIOFailure, "write failed");
}

template <typename T>
T read_raw(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) raise(ErrorKind::kIOFailure, "unexpected end of stream");
  return value;
}
}  // namespace

void write_u8(std::ostream& os, uint8_t value) { write_raw(os, value); }
void write_u16(std::ostream& os, uint16_t value) { write_raw(os, value); }
void write_u32(std::ostream& os, uint32_t value) { write_raw(os, value); }
void write_f32(std::ostream& os, float value) { write_raw(os, value); }
void write_f64(std::ostream& os, double value) { write_raw(os, value); }

void write_f32_array(std::ostream& os, const float* values, size_t count) {
  os.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * sizeof(float)));
  if (!os) raise(ErrorKind::kIOFailure, "write failed");
}

void write_f64_array(std::ostream& os, const double* values, size_t count) {
  os.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * sizeof(double)));
  if (!os) raise(ErrorKind::kIOFailure, "write failed");
}

uint8_t read_u8(std::istream& is) { return read_raw<uint8_t>(is); }
uint16_t read_u16(std::istream& is) { return read_raw<uint16_t>(is); }
uint32_t read_u32(std::istream& is) { return read_raw<uint32_t>(is); }
float read_f32(std::istream& is) { return read_raw<float>(is); }
double read_f64(std::istream& is) { return read_raw<double>(is); }

void read_f32_array(std::istream& is, float* values, size_t count) {
  is.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(float)));
  if (!is) raise(ErrorKind::kIOFailure, "unexpected end of stream");
}

void read_f64_array(std::istream& is, double* values, size_t count) {
  is.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) raise(ErrorKind::kIOFailure, "unexpected end of stream");
}

}  // namespace bin

std::string strf(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list args_copy;
  va_copy(args_copy, args);
  const int needed = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::string out;
  if (needed > 0) {
    out.resize(static_cast<size_t>(needed));
    std::vsnprintf(out.data(), out.size() + 1, fmt, args_copy);
  }
  va_end(args_copy);
  return out;
}

}  // namespace asc
