#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace odp {

// Seeded generator whose output sequence is identical on every platform.
// std::mt19937_64 has a fully specified sequence; the standard distributions
// do not, so the draws below map raw 64-bit words themselves.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a named sub-task (image id, TAL index, "split", ...).
  static Rng derive(std::uint64_t master, std::string_view key);
  static Rng derive(std::uint64_t master, std::uint64_t index);

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01();

  // Uniform integer in [lo, hi). Requires lo < hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Index drawn with probability proportional to weights[i].
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace odp
