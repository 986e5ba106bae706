#pragma once

#include <cmath>
#include <cstdint>

namespace davse {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based generator. A stream is fully determined by its key, so
// substreams derived from (seed, label, index) reproduce bit-identically
// whether clips are generated serially or in parallel.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(splitmix64(seed)), ctr_(0) {}

  // Derive an independent stream from a base seed and up to three labels.
  static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t k = splitmix64(seed);
    k = splitmix64(k ^ (a + 0x9e3779b97f4a7c15ull));
    k = splitmix64(k ^ (b + 0xc2b2ae3d27d4eb4full));
    k = splitmix64(k ^ (c + 0x165667b19e3779f9ull));
    Rng r(0);
    r.key_ = k;
    r.ctr_ = 0;
    return r;
  }

  uint64_t next_u64() { return splitmix64(key_ ^ (0x9e3779b97f4a7c15ull * ++ctr_)); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

 private:
  uint64_t key_;
  uint64_t ctr_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable 64-bit hash of a string label, for deriving per-name streams.
inline uint64_t hash_label(const char* s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (; *s; ++s) h = (h ^ static_cast<uint8_t>(*s)) * 0x100000001b3ull;
  return h;
}

}  // namespace davse
