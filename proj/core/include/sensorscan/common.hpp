#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace sensorscan {

#ifdef SENSORSCAN_USE_FLOAT
using Real = float;
#else
using Real = double;
#endif

// Row-major so that a [L, D] window keeps one timestamp per row in memory order.
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input data or configuration (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; the message carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::size_t line_;
};

// A pipeline stage was run before the stage that produces its input (CLI exit code 3).
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(std::string stage, const std::string& what);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

enum class LogLevel { kInfo, kWarning };
using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide log sink and returns the previous one. The default writes to stderr.
LogSink set_log_sink(LogSink sink);
void log_info(const std::string& msg);
void log_warning(const std::string& msg);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. fn must only write disjoint outputs.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// Process-wide worker cap used by batched kernels (set by the CLI --jobs flag).
int default_jobs();
void set_default_jobs(int jobs);

// Raises glibc's mmap and trim thresholds so that the large, short-lived training buffers are
// recycled instead of being mapped and unmapped on every batch. No-op elsewhere.
void tune_allocator();

}  // namespace sensorscan
