#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace kmv::rng {

// Counter-based generator (Philox4x32-10, Salmon et al. 2011). Every draw is
// a pure function of (seed, stream, index), which is what makes simulations
// reproducible independently of thread scheduling: particle i always reads
// stream i, whatever thread executes it.
struct Philox4x32 {
  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    return ctr;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent sub-seed for replicate / level `index` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x9E3779B97F4A7C15ull));
}

// Stream name spaces; keeps initial-condition draws, path noise and
// projection draws on disjoint streams of the same seed.
enum class Domain : std::uint64_t {
  init = 1,
  path = 2,
  projection = 3,
  subsample = 4,
  scratch = 5,
};

inline std::uint64_t stream_id(Domain d, std::uint64_t index) {
  return (static_cast<std::uint64_t>(d) << 56) | index;
}

// 128-bit block -> two 64-bit words.
inline std::array<std::uint64_t, 2> block_u64(std::uint64_t seed, std::uint64_t stream,
                                              std::uint64_t index) {
  const auto out = Philox4x32::block(
      {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
       static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  return {(static_cast<std::uint64_t>(out[1]) << 32) | out[0],
          (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
}

inline double u01(std::uint64_t bits) {  // [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double u01_positive(std::uint64_t bits) {  // (0, 1]
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Box-Muller pair; pure function of (seed, stream, index).
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream,
                                         std::uint64_t index) {
  const auto u = block_u64(seed, stream, index);
  const double r = std::sqrt(-2.0 * std::log(u01_positive(u[0])));
  const double a = kTwoPi * u01(u[1]);
  return {r * std::cos(a), r * std::sin(a)};
}

// Single standard-normal draw; one block per draw keeps the mapping stateless.
inline double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const auto u = block_u64(seed, stream, index);
  const double r = std::sqrt(-2.0 * std::log(u01_positive(u[0])));
  return r * std::cos(kTwoPi * u01(u[1]));
}

// Sequential view of one stream, for sampling code that draws a variable
// number of values. Calls advance an internal block counter; the sequence is
// still a pure function of (seed, stream) and the call order.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return block_u64(seed_, stream_, index_++)[0]; }

  double uniform() { return u01(next_u64()); }  // [0, 1)

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const auto p = normal_pair(seed_, stream_, index_++);
    spare_ = p[1];
    have_spare_ = true;
    return p[0];
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t index_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace kmv::rng
