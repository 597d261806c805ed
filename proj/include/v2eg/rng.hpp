#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace v2eg {

// xoshiro256** seeded through splitmix64. All derived distributions are
// implemented here (not via <random> distributions) so streams are identical
// across standard libraries.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  bool bernoulli(double p);

  // Independent child stream, deterministic in (this seed, stream id).
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_{false};
  double spare_{0.0};
};

std::uint64_t splitmix64(std::uint64_t& state);
// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace v2eg
