#include "sensorscan/common.hpp"

#include "text.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstdio>
#include <fstream>
#include <iostream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <mutex>
#include <thread>
#include <vector>

namespace sensorscan {

ParseError::ParseError(std::string path, std::size_t line, const std::string& what)
    : ValidationError(path + ":" + std::to_string(line) + ": " + what),
      path_(std::move(path)),
      line_(line) {}

MissingArtifactError::MissingArtifactError(std::string stage, const std::string& what)
    : Error(what), stage_(std::move(stage)) {}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& msg) {
    std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << msg << '\n';
  };
  return s;
}

std::atomic<int> g_jobs{1};

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(sink_mutex());
  std::swap(sink(), s);
  return s;
}

void log_info(const std::string& msg) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(LogLevel::kInfo, msg);
}

void log_warning(const std::string& msg) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(LogLevel::kWarning, msg);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next++; i < n; i = next++) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = n;
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

int default_jobs() { return g_jobs.load(); }
void set_default_jobs(int jobs) { g_jobs.store(std::max(jobs, 1)); }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace detail {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace detail

}  // namespace sensorscan
