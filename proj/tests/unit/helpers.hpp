#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "sensorscan/common.hpp"
#include "sensorscan/nn/grad_check.hpp"

namespace testutil {

using sensorscan::Mat;
using sensorscan::Rng;

inline Mat randn(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Captures warnings for the lifetime of the object and keeps info messages quiet.
class LogCapture {
 public:
  LogCapture() {
    prev_ = sensorscan::set_log_sink([this](sensorscan::LogLevel level, const std::string& msg) {
      if (level == sensorscan::LogLevel::kWarning) warnings.push_back(msg);
    });
  }
  ~LogCapture() { sensorscan::set_log_sink(prev_); }
  std::vector<std::string> warnings;

 private:
  sensorscan::LogSink prev_;
};

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("sensorscan_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Input wrapped as a parameter so the gradient checker can perturb it.
struct InputParam {
  sensorscan::nn::Parameter p;
  explicit InputParam(Mat v) : p("input", std::move(v)) {}
};

}  // namespace testutil
