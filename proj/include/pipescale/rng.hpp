#pragma once

#include <cmath>
#include <cstdint>

namespace pipescale {

// Deterministic, platform-independent PRNG (splitmix64 core). std:: engines
// are avoided on purpose: distribution implementations differ across
// standard libraries and would break byte-identical rerun guarantees.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Unbiased index in [0, n).
  std::size_t pick_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % n);
  }

  // Exponential inter-arrival gap for a Poisson process of the given rate.
  double exponential(double rate) { return -std::log1p(-next_double()) / rate; }

  int poisson(double mean) {
    int count = 0;
    // Knuth's product method, chunked so exp(-mean) never underflows.
    while (mean > 300.0) {
      count += poisson_small(300.0);
      mean -= 300.0;
    }
    return count + poisson_small(mean);
  }

 private:
  int poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double threshold = std::exp(-mean);
    int k = 0;
    double prod = next_double();
    while (prod > threshold) {
      ++k;
      prod *= next_double();
    }
    return k;
  }

  std::uint64_t state_;
};

// Independent sub-streams derived from one seed, so draws made by one
// component never shift the sequences seen by another.
struct RngStreams {
  Rng arrivals;
  Rng routing;
  Rng fanout;
  Rng tie_break;

  explicit RngStreams(std::uint64_t seed)
      : arrivals(derive(seed, 0x61727269ULL)),
        routing(derive(seed, 0x726f7574ULL)),
        fanout(derive(seed, 0x66616e6fULL)),
        tie_break(derive(seed, 0x74696573ULL)) {}

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng mixer(seed ^ (stream * 0x9e3779b97f4a7c15ULL));
    mixer.next_u64();
    return mixer.next_u64();
  }
};

}  // namespace pipescale
