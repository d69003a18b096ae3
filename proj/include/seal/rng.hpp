#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "seal/errors.hpp"

namespace seal::num {

// Counter-based splittable generator. A stream is identified by
// (seed, stream_id); the i-th output is a pure function of the key and the
// counter, so replay is bit-identical regardless of how other streams were
// consumed. Substreams derive a fresh key, never share counters.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_(derive_key(seed, stream_id)), ctr_(0) {}

  std::uint64_t next_u64() {
    return mix(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_double_open() { return 1.0 - next_double(); }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller. Consumes exactly two uniforms per call
  // so the draw count stays predictable.
  double next_gaussian() {
    const double u1 = next_double_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Independent child stream; keyed off this stream's identity, not its
  // position, so derivation order does not matter.
  RngStream substream(std::uint64_t id) const {
    RngStream s(*this);
    s.key_ = mix(key_ ^ mix(id * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL));
    s.ctr_ = 0;
    return s;
  }

  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    return substream(a).substream(b);
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ULL;
    z ^= z >> 33;
    return z;
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream_id) {
    return mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^
               mix(stream_id * 0xd6e8feb86659fd93ULL + 1));
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

// n i.i.d. draws from N(mu, sigma^2). sigma == 0 degenerates to n copies
// of mu.
inline std::vector<double> gaussian_draw(RngStream& rng, double mu,
                                         double sigma, std::size_t n) {
  if (sigma < 0.0) throw NegativeSigma("gaussian_draw: sigma < 0");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = sigma == 0.0 ? mu : mu + sigma * rng.next_gaussian();
  }
  return out;
}

}  // namespace seal::num
