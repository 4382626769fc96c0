#include "mvlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace mvlab::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Block round(const Block& c, const Key& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kMul0, c[0], hi0, lo0);
  mulhilo(kMul1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

inline void box_muller(const Block& b, double& z0, double& z1) {
  const double u1 = to_open_unit(join(b[0], b[1]));
  const double u2 = to_open_unit(join(b[2], b[3]));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

}  // namespace

Block philox4x32(Block counter, Key key) {
  counter = round(counter, key);
  for (int i = 1; i < 10; ++i) {
    key[0] += kWeyl0;
    key[1] += kWeyl1;
    counter = round(counter, key);
  }
  return counter;
}

CounterStream::CounterStream(std::uint64_t seed, Stream stream) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

Block CounterStream::block(std::uint64_t major, std::uint64_t minor, std::uint32_t index) const {
  // minor (particle / path index) is folded with the block index so that the
  // full 64-bit major counter stays available for long time grids.
  const std::uint64_t m = minor ^ (static_cast<std::uint64_t>(index) << 40);
  Block c{static_cast<std::uint32_t>(major), static_cast<std::uint32_t>(major >> 32),
          static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32)};
  return philox4x32(c, key_);
}

void CounterStream::normals(std::uint64_t major, std::uint64_t minor, std::span<double> out) const {
  const std::size_t n = out.size();
  std::uint32_t index = 0;
  for (std::size_t i = 0; i < n; i += 2, ++index) {
    double z0, z1;
    box_muller(block(major, minor, index), z0, z1);
    out[i] = z0;
    if (i + 1 < n) out[i + 1] = z1;
  }
}

void CounterStream::uniforms(std::uint64_t major, std::uint64_t minor, std::span<double> out) const {
  const std::size_t n = out.size();
  std::uint32_t index = 0;
  for (std::size_t i = 0; i < n; i += 2, ++index) {
    const Block b = block(major, minor, index);
    out[i] = to_open_unit(join(b[0], b[1]));
    if (i + 1 < n) out[i + 1] = to_open_unit(join(b[2], b[3]));
  }
}

double CounterStream::normal(std::uint64_t major, std::uint64_t minor) const {
  double z0, z1;
  box_muller(block(major, minor, 0), z0, z1);
  return z0;
}

double CounterStream::uniform(std::uint64_t major, std::uint64_t minor) const {
  const Block b = block(major, minor, 0);
  return to_open_unit(join(b[0], b[1]));
}

Engine::Engine(std::uint64_t seed, Stream stream, std::uint64_t substream)
    : stream_(seed, stream), substream_(substream) {}

Engine::result_type Engine::operator()() {
  if (used_ >= 4) {
    buffer_ = stream_.block(counter_++, substream_, 0);
    used_ = 0;
  }
  const std::uint64_t v = join(buffer_[used_], buffer_[used_ + 1]);
  used_ += 2;
  return v;
}

double Engine::uniform() { return to_open_unit((*this)()); }

double Engine::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Engine::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Engine::below(std::uint64_t n) {
  // Lemire-style rejection keeps the result unbiased
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t v;
  do {
    v = (*this)();
  } while (v >= limit);
  return v % n;
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= n) return idx;
  Engine eng(seed, Stream::subsample);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(eng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace mvlab::rng
