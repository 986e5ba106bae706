#pragma once

// Shared helpers for the test suites. The LCG and the analytic "speech-like"
// signal are mirrored bit-for-bit by the NumPy script that produced the
// frozen reference values, so both sides see identical inputs.

#include <cmath>
#include <cstdint>
#include <vector>

#include "davse/dsp.hpp"

namespace testutil {

constexpr double kPi = 3.14159265358979323846;

// 64-bit LCG (Knuth constants), uniform in [-0.5, 0.5).
struct Lcg {
  uint64_t x;
  explicit Lcg(uint64_t seed) : x(seed) {}
  double next() {
    x = 6364136223846793005ULL * x + 1442695040888963407ULL;
    return static_cast<double>(x >> 11) / 9007199254740992.0 - 0.5;
  }
};

inline std::vector<double> lcg_noise(size_t n, uint64_t seed) {
  Lcg g(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = g.next();
  return out;
}

// Harmonic carrier under a slow 3 Hz envelope; min envelope 0.2 keeps every
// frame above the STOI silence threshold.
inline std::vector<double> speechlike(size_t n, int sr = 16000) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double env = 0.6 + 0.4 * std::sin(2.0 * kPi * 3.0 * t);
    double carrier = 0.0;
    double amp = 1.0;
    for (int k = 1; k <= 10; ++k) {
      amp *= 0.7;
      carrier += amp * std::sin(2.0 * kPi * 150.0 * k * t);
    }
    x[i] = env * carrier;
  }
  return x;
}

inline davse::dsp::Waveform make_wave(std::vector<double> samples, int sr = 16000) {
  davse::dsp::Waveform w;
  w.sample_rate = sr;
  w.samples = std::move(samples);
  return w;
}

}  // namespace testutil
