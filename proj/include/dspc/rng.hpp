#pragma once

#include <cmath>
#include <cstdint>
#include <locale>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dspc/errors.hpp"

namespace dspc {

// Deterministic random stream. Identical seed gives an identical stream on
// every platform: the engine is std::mt19937_64 (state sequence fixed by the
// standard) and all derived draws below avoid std::*_distribution, whose
// output is implementation-defined.
//
// Algorithm identifier: "mt19937_64/u53/box-muller"
//   uniform  = (x >> 11) * 2^-53               in [0,1)
//   normal   = sqrt(-2 ln u1) * cos(2 pi u2)   u1 in (0,1], cosine branch only
//   randint  = rejection sampling, no modulo bias
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/u53/box-muller";

  explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. The sine branch is discarded so the
  // stream state never carries a cached value (keeps serialization trivial).
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Uniform integer in [0, n).
  int64_t randint(int64_t n) {
    if (n <= 0) throw Error("Rng::randint: n must be positive");
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % bound);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(randint(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << seed_ << ' ' << eng_;
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    uint64_t seed = 0;
    is >> seed;
    Rng r(seed);
    is >> r.eng_;
    if (!is) throw Error("Rng::deserialize: malformed state string");
    return r;
  }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_;
};

// Stateless 64-bit mix, used to derive independent stream seeds (for example
// one shuffle stream per epoch) from a base seed.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

}  // namespace dspc
