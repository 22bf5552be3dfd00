// SPDX-License-Identifier: Apache-2.0
//
// Shared utilities: content hashing, deterministic RNG, bounded parallel map.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace conductor::util {

/// SHA-256 of a byte buffer, returned as a lowercase hex string.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& bytes);

/// SHA-256 of a file's contents. Throws if the file cannot be read.
std::string sha256_file(const std::string& path);

/// Deterministic RNG wrapper. The uniform/normal transforms are implemented
/// here (not via std distributions) so streams are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one cached spare).
  double normal();

  /// Fisher-Yates shuffle with this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to caller-owned, index-addressed slots; any reduction over them
/// happens after the join, in index order, so output is identical for every
/// worker count. The first exception (by index) is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Reads a whole file into a string. Throws on failure.
std::string read_file(const std::string& path);

/// Writes a string to a file, creating parent directories. Throws on failure.
void write_file(const std::string& path, const std::string& contents);

/// Formats a double with enough digits to round-trip, deterministically.
std::string format_double(double v);

}  // namespace conductor::util
