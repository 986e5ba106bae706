#include "davse/dsp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace davse::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kWindowSumGuard = 1e-8;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }
}  // namespace

void StftConfig::validate() const {
  if (sample_rate <= 0 || win_len <= 0 || hop <= 0 || fft_size <= 0)
    throw std::invalid_argument("StftConfig: all sizes must be positive");
  if (win_len > fft_size)
    throw std::invalid_argument("StftConfig: win_len must not exceed fft_size");
  if (hop >= win_len)
    throw std::invalid_argument("StftConfig: hop must be smaller than win_len");
  if (!is_pow2(fft_size))
    throw std::invalid_argument("StftConfig: fft_size must be a power of two");
}

double Waveform::rms() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

std::vector<double> hann_window(int win_len) {
  if (win_len < 2) throw std::invalid_argument("hann_window: win_len must be >= 2");
  std::vector<double> w(win_len);
  for (int n = 0; n < win_len; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / win_len));
  return w;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (!is_pow2(static_cast<int>(n)))
    throw std::invalid_argument("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

namespace {

// numpy-style reflect padding (edge sample not repeated).
double padded_sample(const std::vector<double>& x, long i) {
  const long n = static_cast<long>(x.size());
  if (n == 1) return x[0];
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<size_t>(i)];
}

}  // namespace

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("stft: waveform sample rate " +
                                std::to_string(w.sample_rate) +
                                " does not match config " +
                                std::to_string(cfg.sample_rate));
  if (w.samples.empty()) throw std::invalid_argument("stft: empty waveform");

  const int F = cfg.freq_bins();
  const long n = w.size();
  const int T = static_cast<int>(1 + n / cfg.hop);
  const std::vector<double> win = hann_window(cfg.win_len);
  const long center = cfg.win_len / 2;

  ComplexSpectrogram S(F, T, cfg);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (int t = 0; t < T; ++t) {
    const long start = static_cast<long>(t) * cfg.hop - center;
    for (int k = 0; k < cfg.win_len; ++k)
      buf[k] = padded_sample(w.samples, start + k) * win[k];
    for (int k = cfg.win_len; k < cfg.fft_size; ++k) buf[k] = 0.0;
    fft(buf, false);
    for (int f = 0; f < F; ++f) {
      S.real(f, t) = buf[f].real();
      S.imag(f, t) = buf[f].imag();
    }
  }
  return S;
}

Waveform istft(const ComplexSpectrogram& S, const StftConfig& cfg, long out_len) {
  cfg.validate();
  if (S.F != cfg.freq_bins())
    throw std::invalid_argument("istft: spectrogram bins do not match config");
  if (out_len < 0) throw std::invalid_argument("istft: negative output length");
  if (S.T != 1 + out_len / cfg.hop)
    throw std::invalid_argument("istft: frame count inconsistent with out_len");

  const std::vector<double> win = hann_window(cfg.win_len);
  const long center = cfg.win_len / 2;
  const long padded_len = static_cast<long>(S.T - 1) * cfg.hop + cfg.win_len;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> wsum(padded_len, 0.0);

  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (int t = 0; t < S.T; ++t) {
    for (int f = 0; f < S.F; ++f) buf[f] = {S.real(f, t), S.imag(f, t)};
    // Hermitian completion of the one-sided spectrum.
    for (int f = S.F; f < cfg.fft_size; ++f) buf[f] = std::conj(buf[cfg.fft_size - f]);
    fft(buf, true);
    const long off = static_cast<long>(t) * cfg.hop;
    for (int k = 0; k < cfg.win_len; ++k) {
      acc[off + k] += buf[k].real() * win[k];
      wsum[off + k] += win[k] * win[k];
    }
  }

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(static_cast<size_t>(out_len), 0.0);
  for (long i = 0; i < out_len; ++i) {
    const long j = i + center;
    if (j < padded_len && wsum[j] >= kWindowSumGuard)
      out.samples[static_cast<size_t>(i)] = acc[j] / wsum[j];
  }
  return out;
}

ComplexMask compute_cirm(const ComplexSpectrogram& clean,
                         const ComplexSpectrogram& noisy, double clip_bound,
                         double eps) {
  if (clean.F != noisy.F || clean.T != noisy.T)
    throw std::invalid_argument("compute_cirm: shape mismatch");
  if (clip_bound < 0.0) throw std::invalid_argument("compute_cirm: clip_bound < 0");
  if (eps <= 0.0) throw std::invalid_argument("compute_cirm: eps must be positive");

  ComplexMask M(clean.F, clean.T, clip_bound);
  const size_t n = clean.re.size();
  for (size_t i = 0; i < n; ++i) {
    const double a = clean.re[i], b = clean.im[i];
    const double c = noisy.re[i], d = noisy.im[i];
    const double denom = c * c + d * d + eps;
    double mr = (a * c + b * d) / denom;
    double mi = (b * c - a * d) / denom;
    if (clip_bound > 0.0) {
      mr = std::min(clip_bound, std::max(-clip_bound, mr));
      mi = std::min(clip_bound, std::max(-clip_bound, mi));
    }
    M.re[i] = mr;
    M.im[i] = mi;
  }
  return M;
}

ComplexSpectrogram apply_mask(const ComplexMask& M, const ComplexSpectrogram& S) {
  if (M.F != S.F || M.T != S.T)
    throw std::invalid_argument("apply_mask: shape mismatch");
  ComplexSpectrogram out(S.F, S.T, S.config);
  const size_t n = S.re.size();
  for (size_t i = 0; i < n; ++i) {
    const double a = M.re[i], b = M.im[i];
    const double c = S.re[i], d = S.im[i];
    out.re[i] = a * c - b * d;
    out.im[i] = a * d + b * c;
  }
  return out;
}

MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db) {
  if (clean.size() != noise.size())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  if (clean.sample_rate != noise.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rate mismatch");
  const double rc = clean.rms();
  const double rn = noise.rms();
  if (rc <= 0.0 || rn <= 0.0)
    throw std::invalid_argument("mix_at_snr: zero-power input");

  const double g = rc / (rn * std::pow(10.0, snr_db / 20.0));
  MixResult res;
  res.gain = g;
  res.noisy.sample_rate = clean.sample_rate;
  res.noisy.samples.resize(clean.samples.size());
  for (size_t i = 0; i < clean.samples.size(); ++i)
    res.noisy.samples[i] = clean.samples[i] + g * noise.samples[i];
  return res;
}

}  // namespace davse::dsp
