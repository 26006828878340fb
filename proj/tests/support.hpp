#ifndef BARKSCOPE_TESTS_SUPPORT_HPP
#define BARKSCOPE_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "barkscope/audio.hpp"
#include "barkscope/rng.hpp"

namespace barkscope::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "barkscope") {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline AudioClip tone(double hz, double seconds, double amplitude = 0.5, int rate = kCanonicalRate) {
  AudioClip c;
  c.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * rate));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return c;
}

inline AudioClip white_noise(double seconds, double stddev, std::uint64_t seed, int rate = kCanonicalRate) {
  Rng rng(seed);
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (double& s : c.samples) s = stddev * rng.normal();
  return c;
}

inline AudioClip scaled(AudioClip c, double gain) {
  for (double& s : c.samples) s *= gain;
  return c;
}

}  // namespace barkscope::testing

#endif  // BARKSCOPE_TESTS_SUPPORT_HPP
