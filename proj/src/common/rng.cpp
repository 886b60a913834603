#include "odp/rng.hpp"

#include <limits>
#include <numeric>

#include "odp/error.hpp"

namespace odp {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
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

Rng Rng::derive(std::uint64_t master, std::string_view key) {
  return Rng(splitmix64(splitmix64(master) ^ fnv1a64(key)));
}

Rng Rng::derive(std::uint64_t master, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform01() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo >= hi) throw ValidationError("uniform_int needs lo < hi");
  const auto range = static_cast<std::uint64_t>(hi - lo);
  // Rejection sampling keeps every value equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return lo + static_cast<std::int64_t>(x % range);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw ValidationError("categorical draw over empty weights");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = uniform01() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

}  // namespace odp
