#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace upcg {

// Seeded generator with distribution mappings written out explicitly so
// that sequences do not depend on the standard library implementation.
class Rng {
public:
  explicit Rng(uint64_t seed = 0) : _engine(seed) {}

  uint64_t next() { return _engine(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(_engine() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : uint64_t(uniform() * double(n)) % n; }

  double normal()
  {
    if (_haveSpare) {
      _haveSpare = false;
      return _spare;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    _spare = r * std::sin(2.0 * std::numbers::pi * u2);
    _haveSpare = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::mt19937_64 _engine;
  double _spare = 0.0;
  bool _haveSpare = false;
};

}  // namespace upcg
