#pragma once

// Counter-based random streams.
//
// Every random number in the library is a pure function of
// (seed, stream, counter) through Philox4x32-10, so results do not depend on
// the order in which particles are processed or on the worker count.

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace mvlab::rng {

/// Purpose tags keep independent consumers of the same seed apart.
enum class Stream : std::uint32_t {
  noise = 1,
  init = 2,
  subsample = 3,
  checker = 4,
  directions = 5,
  quadrature = 6,
  interaction = 7,
  test = 99,
};

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. constants).
Block philox4x32(Block counter, Key key);

/// Uniform double in the open interval (0,1) from 64 random bits.
inline double to_open_unit(std::uint64_t bits) {
  // 53 high bits, shifted by half an ulp so 0 is never produced
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Keyed family of random blocks addressed by a two-level counter
/// (major, minor), e.g. (time step, particle index).
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, Stream stream);

  Block block(std::uint64_t major, std::uint64_t minor, std::uint32_t index) const;

  /// Fills `out` with i.i.d. standard normals for address (major, minor).
  void normals(std::uint64_t major, std::uint64_t minor, std::span<double> out) const;

  /// Fills `out` with i.i.d. uniforms on (0,1) for address (major, minor).
  void uniforms(std::uint64_t major, std::uint64_t minor, std::span<double> out) const;

  double normal(std::uint64_t major, std::uint64_t minor) const;
  double uniform(std::uint64_t major, std::uint64_t minor) const;

 private:
  Key key_;
};

/// Sequential engine on top of Philox, usable where a conventional generator
/// interface is more natural (checkers, subsampling). Satisfies
/// UniformRandomBitGenerator.
class Engine {
 public:
  using result_type = std::uint64_t;

  Engine(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  double uniform();                        ///< (0,1)
  double uniform(double lo, double hi);    ///< (lo,hi)
  double normal();
  std::uint64_t below(std::uint64_t n);    ///< uniform integer in [0,n)

 private:
  CounterStream stream_;
  std::uint64_t substream_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// `count` distinct indices from [0,n) in a seeded order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                    std::uint64_t seed);

}  // namespace mvlab::rng
