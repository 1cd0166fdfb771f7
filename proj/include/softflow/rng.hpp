#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace softflow {

// Seeded random stream with a fully documented draw discipline, so every
// consumer (initializers, samplers, buffers, mutation) is reproducible and
// pinnable in tests.
//
// Draw primitives:
//   uniform01()      -- top 53 bits of one mt19937_64 draw, scaled to [0,1)
//   uniform_int(n)   -- rejection sampling on mt19937_64 draws, uniform in [0,n)
//
// State round-trips through save()/load() as the engine's textual state.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : gen_(seed) {}

  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). One engine draw per attempt; attempts beyond
  // the rejection threshold are discarded.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  std::string save() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void load(const std::string& state) {
    std::istringstream is(state);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("RngStream: malformed engine state");
  }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 step; used to derive independent stream seeds (e.g. evaluation
// streams keyed by training step) without disturbing the main stream.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace softflow
