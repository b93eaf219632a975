#include "see/hashing.h"

#include <limits>
#include <numeric>
#include <stdexcept>

namespace see {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) {
  return splitmix64(splitmix64(seed) ^ (value + 0x632be59bd9b4e019ULL));
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view value) {
  return mix_seed(seed, fnv1a64(value));
}

double keyed_uniform(std::uint64_t seed, std::string_view key, std::string_view salt) {
  const std::uint64_t h = mix_seed(mix_seed(seed, key), salt);
  // 53 high bits -> exactly representable double in [0, 1).
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::uint64_t DeterministicRng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("DeterministicRng::below: bound must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double DeterministicRng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::vector<std::size_t> DeterministicRng::sample_indices(std::size_t population,
                                                          std::size_t count) {
  if (count > population) throw std::invalid_argument("sample_indices: count exceeds population");
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots end up holding the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(below(population - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace see
