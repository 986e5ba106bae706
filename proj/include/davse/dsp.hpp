#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace davse::dsp {

struct StftConfig {
  int sample_rate = 16000;
  int win_len = 400;
  int hop = 160;
  int fft_size = 512;

  int freq_bins() const { return fft_size / 2 + 1; }
  // Throws std::invalid_argument on inconsistent geometry.
  void validate() const;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<double> s, int sr) : samples(std::move(s)), sample_rate(sr) {}
  long size() const { return static_cast<long>(samples.size()); }
  double rms() const;
};

// Real/imag planes of a one-sided STFT, each stored row-major as [F][T].
struct ComplexSpectrogram {
  int F = 0;
  int T = 0;
  std::vector<double> re;
  std::vector<double> im;
  StftConfig config;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int f, int t, const StftConfig& cfg)
      : F(f), T(t), re(static_cast<size_t>(f) * t, 0.0),
        im(static_cast<size_t>(f) * t, 0.0), config(cfg) {}
  double& real(int f, int t) { return re[static_cast<size_t>(f) * T + t]; }
  double& imag(int f, int t) { return im[static_cast<size_t>(f) * T + t]; }
  double real(int f, int t) const { return re[static_cast<size_t>(f) * T + t]; }
  double imag(int f, int t) const { return im[static_cast<size_t>(f) * T + t]; }
};

// A cIRM with the same plane layout as the spectrogram it masks.
// clip_bound == 0 means unclipped.
struct ComplexMask {
  int F = 0;
  int T = 0;
  std::vector<double> re;
  std::vector<double> im;
  double clip_bound = 0.0;

  ComplexMask() = default;
  ComplexMask(int f, int t, double clip)
      : F(f), T(t), re(static_cast<size_t>(f) * t, 0.0),
        im(static_cast<size_t>(f) * t, 0.0), clip_bound(clip) {}
};

// Periodic Hann window: w[n] = 0.5*(1 - cos(2*pi*n/win_len)).
std::vector<double> hann_window(int win_len);

// In-place iterative radix-2 FFT; a.size() must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Center-padded (reflect) analysis; T = 1 + floor(len/hop).
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

// Weighted overlap-add with window-sum normalization; output clipped or
// zero-padded to out_len.
Waveform istft(const ComplexSpectrogram& S, const StftConfig& cfg, long out_len);

// M = S_clean / S_noisy, computed as (a+bi)(c-di)/(c^2+d^2+eps), components
// clamped to [-clip_bound, clip_bound] when clip_bound > 0.
ComplexMask compute_cirm(const ComplexSpectrogram& clean,
                         const ComplexSpectrogram& noisy, double clip_bound,
                         double eps = 1e-8);

// Per-bin complex multiplication.
ComplexSpectrogram apply_mask(const ComplexMask& M, const ComplexSpectrogram& S);

struct MixResult {
  Waveform noisy;
  double gain = 0.0;
};

// noisy = clean + g*noise with g chosen so the empirical SNR equals snr_db.
MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db);

}  // namespace davse::dsp
