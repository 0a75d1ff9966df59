#include "slowfast/random.hpp"

namespace slowfast {

RandomStream::RandomStream(std::uint64_t master_seed) : RandomStream(std::vector<std::uint64_t>{master_seed}) {}

RandomStream::RandomStream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path)
    : RandomStream([&] {
        std::vector<std::uint64_t> key{master_seed};
        key.insert(key.end(), path.begin(), path.end());
        return key;
      }()) {}

RandomStream::RandomStream(std::vector<std::uint64_t> key) : key_(std::move(key)) { reseed(); }

RandomStream RandomStream::derive(std::uint64_t index) const {
  auto key = key_;
  key.push_back(index);
  return RandomStream(std::move(key));
}

void RandomStream::reseed() {
  // Each 64-bit key word becomes two 32-bit seed words, prefixed by the path
  // length so that keys of different depth never collide.
  std::vector<std::uint32_t> words;
  words.reserve(2 * key_.size() + 1);
  words.push_back(static_cast<std::uint32_t>(key_.size()));
  for (auto k : key_) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffULL));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
  normal_.reset();
}

}  // namespace slowfast
