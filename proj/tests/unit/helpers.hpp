#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "sepdiff/audio_buffer.hpp"
#include "sepdiff/tensor.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sepdiff_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline sepdiff::AudioBuffer random_audio(std::size_t channels, std::size_t length,
                                         double rate, unsigned seed, double scale = 0.5) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  sepdiff::AudioBuffer b(channels, length, rate);
  for (auto& v : b.samples()) v = float(n(gen));
  return b;
}

template <class T>
sepdiff::BasicTensor<T> random_tensor(sepdiff::Shape s, unsigned seed, double scale = 1.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  sepdiff::BasicTensor<T> t(s);
  for (auto& v : t.values()) v = T(n(gen));
  return t;
}

}  // namespace testing
