#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace spinmem {

// splitmix64; used for seeding and for hashing (seed, index) pairs.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256** with a hand-rolled Box-Muller normal. Self-contained so that
// streams are bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in (0, 1]; never returns 0 so log() below is safe.
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic per-stream RNG derived from a master seed and stream indices.
// Independent of thread scheduling: stream (a, b) always yields the same RNG.
inline Rng stream_rng(std::uint64_t master_seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t sm = master_seed;
  std::uint64_t h = splitmix64(sm);
  sm = h ^ (a * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  h = splitmix64(sm);
  sm = h ^ (b * 0x9e3779b97f4a7c15ULL + 0x1405695ecbd31badULL);
  return Rng(splitmix64(sm));
}

// Pairwise tree summation over a fixed index order. The result depends only on
// the values, not on how work was distributed across threads.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_and_stderr(std::span<const double> xs) {
  MeanStderr out;
  const std::size_t n = xs.size();
  if (n == 0) return out;
  out.mean = pairwise_mean(xs);
  if (n < 2) return out;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = xs[i] - out.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
  out.stderr_ = std::sqrt(var / static_cast<double>(n));
  return out;
}

}  // namespace spinmem
