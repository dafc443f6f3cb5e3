#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mpqkd {

// Thrown on invalid configuration (CLI maps this to exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on numeric failures: solver non-convergence, empty spectra,
// insufficient counts (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on malformed record/tally files.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent seed for a named sub-stream (blocks, channel walk,
// reference light, ...).  Pure function of (master, stream, index) so results
// do not depend on worker count or evaluation order.
inline std::uint64_t seed_stream(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = master;
  s ^= splitmix64(stream);
  std::uint64_t t = s + 0x632be59bd9b4e019ULL * (index + 1);
  return splitmix64(t);
}

// xoshiro256++ with explicit sampling helpers.  std:: distributions are
// implementation-defined; everything here is pinned so runs reproduce
// bit-exactly across platforms and worker counts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; two uniforms per call, fixed consumption.
  double normal(double mean, double stddev) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Inversion sampler; intended for small rates (simulation uses lambda <~ 1).
  std::uint32_t poisson(double lambda) {
    return poisson_from(lambda, std::exp(-lambda));
  }

  // Variant with the caller-precomputed exp(-lambda) for hot loops.
  std::uint32_t poisson_from(double lambda, double exp_neg_lambda) {
    if (lambda <= 0.0) return 0;
    double u = uniform();
    double p = exp_neg_lambda;
    double cum = p;
    std::uint32_t k = 0;
    while (u > cum && k < 4000) {
      ++k;
      p *= lambda / k;
      cum += p;
    }
    return k;
  }

  std::uint32_t binomial(std::uint32_t n, double p) {
    std::uint32_t k = 0;
    for (std::uint32_t i = 0; i < n; ++i) k += bernoulli(p) ? 1u : 0u;
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Reduce an angle into [0, 2*pi).
inline double wrap_two_pi(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

}  // namespace mpqkd
