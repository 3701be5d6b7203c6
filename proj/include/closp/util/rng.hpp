#pragma once

#include <cstdint>
#include <string_view>

namespace closp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Splits one command-level seed into named, independent sub-streams
// (generator, split, batching, probe sampling, ...).
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t derive(std::string_view stream) const {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : stream) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return splitmix64(seed_ ^ splitmix64(h));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace closp
