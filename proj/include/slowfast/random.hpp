#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace slowfast {

/// A reproducible random stream identified by a key path.
///
/// The root stream is keyed by the master seed; `derive(i)` appends `i` to the
/// path, so (master, cell, replication, purpose) tuples map to distinct seed
/// sequences. Streams are cheap to copy but must never be shared between
/// concurrent tasks.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t master_seed);
  RandomStream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path);

  RandomStream derive(std::uint64_t index) const;

  std::mt19937_64& engine() { return engine_; }
  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  const std::vector<std::uint64_t>& key() const { return key_; }

 private:
  explicit RandomStream(std::vector<std::uint64_t> key);
  void reseed();

  std::vector<std::uint64_t> key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace slowfast
