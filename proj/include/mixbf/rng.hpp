#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mixbf {

// Seedable random stream used by every sampler in the library. One Rng per
// chain; replicas get their own stream through derive().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) { reseed(seed); }

  std::uint64_t seed() const noexcept { return seed_; }

  // Seed for replica `offset` of a run with master seed `master`.
  static std::uint64_t replica_seed(std::uint64_t master, std::uint64_t offset) {
    return master + 7919u * offset;
  }

  // Independent child stream; deterministic in (seed, stream_id).
  Rng derive(std::uint64_t stream_id) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x6d697862u};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return Rng((static_cast<std::uint64_t>(out[0]) << 32) | out[1]);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return mean + sd * std::normal_distribution<double>(0.0, 1.0)(engine_);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Shape-rate parameterisation: density proportional to x^(shape-1) exp(-rate x).
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0)(engine_) / rate;
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  std::vector<double> dirichlet(std::span<const double> p) {
    std::vector<double> out(p.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      out[i] = gamma(p[i], 1.0);
      total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
  }

  std::uint64_t poisson(double mean) {
    return std::poisson_distribution<std::uint64_t>(mean)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  void reseed(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mixbf
