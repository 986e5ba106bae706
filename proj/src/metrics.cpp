#include "davse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace davse::metrics {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kSiSdrCap = 60.0;
}  // namespace

double si_sdr(const dsp::Waveform& ref, const dsp::Waveform& est) {
  if (ref.size() != est.size())
    throw std::invalid_argument("si_sdr: length mismatch");
  const size_t n = ref.samples.size();
  double rr = 0.0, re = 0.0;
  for (size_t i = 0; i < n; ++i) {
    rr += ref.samples[i] * ref.samples[i];
    re += ref.samples[i] * est.samples[i];
  }
  if (rr <= 0.0) throw std::invalid_argument("si_sdr: zero-power reference");
  const double scale = re / rr;
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = scale * ref.samples[i];
    const double e = est.samples[i] - t;
    sig += t * t;
    err += e * e;
  }
  const double db = 10.0 * std::log10(sig / (err + 1e-12));
  return std::clamp(db, -kSiSdrCap, kSiSdrCap);
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

std::vector<double> resample(const std::vector<double>& x, int sr_in, int sr_out) {
  if (sr_in <= 0 || sr_out <= 0) throw std::invalid_argument("resample: bad rates");
  if (sr_in == sr_out) return x;
  const int g = std::gcd(sr_in, sr_out);
  const int L = sr_out / g;
  const int M = sr_in / g;

  // Windowed-sinc prototype at the upsampled rate, 64 taps per phase,
  // cutoff at 0.45x the lower of the two rates.
  const int taps_per_phase = 64;
  const int len = taps_per_phase * L;
  const double fc = 0.45 * std::min(sr_in, sr_out) / (static_cast<double>(L) * sr_in);
  const double c = 0.5 * (len - 1);
  std::vector<double> h(len);
  for (int j = 0; j < len; ++j) {
    const double t = j - c;
    const double sinc = (t == 0.0) ? 1.0 : std::sin(2.0 * kPi * fc * t) / (2.0 * kPi * fc * t);
    const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * j / (len - 1));  // Hamming
    h[j] = 2.0 * fc * sinc * w * L;
  }

  const long n_in = static_cast<long>(x.size());
  const long n_out = (n_in * L + M - 1) / M;
  const long ctr = std::lround(std::floor(c));
  std::vector<double> y(static_cast<size_t>(n_out), 0.0);
  for (long n = 0; n < n_out; ++n) {
    const long i0 = n * M + ctr;  // center-aligned position at rate L*sr_in
    const long p = i0 % L;
    const long q = i0 / L;
    double acc = 0.0;
    for (int k = 0; k < taps_per_phase; ++k) {
      const long m = q - k;
      if (m < 0 || m >= n_in) continue;
      acc += h[p + static_cast<long>(k) * L] * x[static_cast<size_t>(m)];
    }
    y[static_cast<size_t>(n)] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// STOI
// ---------------------------------------------------------------------------

namespace {

constexpr int kStoiRate = 10000;
constexpr int kFrameLen = 256;  // 25.6 ms at 10 kHz
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kMinCenterFreq = 150.0;
constexpr int kSegFrames = 30;  // 384 ms
constexpr double kDynRangeDb = 40.0;
constexpr double kBetaDb = -15.0;

// Symmetric Hann without zero endpoints (hanning(N+2) with ends dropped).
std::vector<double> stoi_window() {
  std::vector<double> w(kFrameLen);
  for (int n = 0; n < kFrameLen; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * (n + 1) / (kFrameLen + 2)));
  return w;
}

std::vector<std::vector<double>> frame_signal(const std::vector<double>& x,
                                              const std::vector<double>& w) {
  std::vector<std::vector<double>> frames;
  for (size_t i = 0; i + kFrameLen <= x.size(); i += kHop) {
    std::vector<double> f(kFrameLen);
    for (int n = 0; n < kFrameLen; ++n) f[n] = w[n] * x[i + n];
    frames.push_back(std::move(f));
  }
  return frames;
}

// Drop frames whose reference energy is more than kDynRangeDb below the peak
// frame, then overlap-add the kept (already windowed) frames back.
void remove_silent_frames(const std::vector<double>& x, const std::vector<double>& y,
                          std::vector<double>& xs, std::vector<double>& ys) {
  const std::vector<double> w = stoi_window();
  auto xf = frame_signal(x, w);
  auto yf = frame_signal(y, w);
  std::vector<double> energy(xf.size());
  double emax = -1e300;
  for (size_t i = 0; i < xf.size(); ++i) {
    double s = 0.0;
    for (double v : xf[i]) s += v * v;
    energy[i] = 20.0 * std::log10(std::sqrt(s) + 1e-300);
    emax = std::max(emax, energy[i]);
  }
  std::vector<size_t> keep;
  for (size_t i = 0; i < xf.size(); ++i)
    if (energy[i] > emax - kDynRangeDb) keep.push_back(i);

  const size_t n_out = keep.empty() ? 0 : (keep.size() - 1) * kHop + kFrameLen;
  xs.assign(n_out, 0.0);
  ys.assign(n_out, 0.0);
  for (size_t j = 0; j < keep.size(); ++j) {
    const size_t off = j * kHop;
    for (int n = 0; n < kFrameLen; ++n) {
      xs[off + n] += xf[keep[j]][n];
      ys[off + n] += yf[keep[j]][n];
    }
  }
}

// One-third-octave band energies: rows of [n_frames][kBands].
std::vector<std::array<int, 2>> third_octave_bins() {
  std::vector<std::array<int, 2>> bands(kBands);
  const int n_bins = kFft / 2 + 1;
  auto nearest_bin = [&](double freq) {
    int best = 0;
    double bestd = 1e300;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * kStoiRate / kFft;
      const double d = std::abs(f - freq);
      if (d < bestd) {
        bestd = d;
        best = k;
      }
    }
    return best;
  };
  for (int i = 0; i < kBands; ++i) {
    const double cf = kMinCenterFreq * std::pow(2.0, i / 3.0);
    bands[i] = {nearest_bin(cf / std::pow(2.0, 1.0 / 6.0)),
                nearest_bin(cf * std::pow(2.0, 1.0 / 6.0))};
  }
  return bands;
}

std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  const std::vector<double> w = stoi_window();
  const auto bands = third_octave_bins();
  std::vector<std::vector<double>> env;
  std::vector<std::complex<double>> buf(kFft);
  for (size_t i = 0; i + kFrameLen <= x.size(); i += kHop) {
    for (int n = 0; n < kFrameLen; ++n) buf[n] = w[n] * x[i + n];
    for (int n = kFrameLen; n < kFft; ++n) buf[n] = 0.0;
    dsp::fft(buf, false);
    std::vector<double> e(kBands);
    for (int b = 0; b < kBands; ++b) {
      double s = 0.0;
      for (int k = bands[b][0]; k < bands[b][1]; ++k) s += std::norm(buf[k]);
      e[b] = std::sqrt(s);
    }
    env.push_back(std::move(e));
  }
  return env;
}

double band_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cab = 0.0, caa = 0.0, cbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    cab += da * db;
    caa += da * da;
    cbb += db * db;
  }
  if (caa == 0.0 || cbb == 0.0) return (caa == 0.0 && cbb == 0.0) ? 1.0 : 0.0;
  return cab / (std::sqrt(caa) * std::sqrt(cbb));
}

}  // namespace

double stoi(const dsp::Waveform& ref, const dsp::Waveform& est) {
  if (ref.size() != est.size()) throw std::invalid_argument("stoi: length mismatch");
  if (ref.sample_rate != 16000 || est.sample_rate != 16000)
    throw std::invalid_argument("stoi: inputs must be 16 kHz");
  if (ref.size() < ref.sample_rate / 2)
    throw std::invalid_argument("stoi: inputs shorter than 0.5 s");

  const std::vector<double> x10 = resample(ref.samples, 16000, kStoiRate);
  const std::vector<double> y10 = resample(est.samples, 16000, kStoiRate);

  std::vector<double> xs, ys;
  remove_silent_frames(x10, y10, xs, ys);

  const auto xe = band_envelopes(xs);
  const auto ye = band_envelopes(ys);
  const int n_frames = static_cast<int>(xe.size());
  if (n_frames < kSegFrames)
    throw std::invalid_argument("stoi: too little signal after silence removal");

  const double clip = std::pow(10.0, -kBetaDb / 20.0);
  double acc = 0.0;
  int count = 0;
  std::vector<double> xseg(kSegFrames), yseg(kSegFrames);
  for (int m = kSegFrames; m <= n_frames; ++m) {
    for (int b = 0; b < kBands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (int j = 0; j < kSegFrames; ++j) {
        xseg[j] = xe[m - kSegFrames + j][b];
        yseg[j] = ye[m - kSegFrames + j][b];
        nx += xseg[j] * xseg[j];
        ny += yseg[j] * yseg[j];
      }
      const double alpha = (ny > 0.0) ? std::sqrt(nx / ny) : 0.0;
      for (int j = 0; j < kSegFrames; ++j)
        yseg[j] = std::min(alpha * yseg[j], xseg[j] * (1.0 + clip));
      acc += band_correlation(xseg, yseg);
      ++count;
    }
  }
  return std::clamp(acc / count, 0.0, 1.0);
}

MetricsRecord evaluate_clip(const dsp::Waveform& ref, const dsp::Waveform& est,
                            const ConditionTags& tags) {
  if (ref.size() != est.size())
    throw std::invalid_argument("evaluate_clip: length mismatch");
  MetricsRecord rec;
  rec.si_sdr_db = si_sdr(ref, est);
  rec.stoi = stoi(ref, est);
  rec.snr_condition = tags.snr_db;
  rec.variant_id = tags.variant_id;
  rec.corruption_mode = tags.corruption_mode;
  rec.clip_id = tags.clip_id;
  return rec;
}

std::vector<ReportRow> aggregate(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::map<std::tuple<std::string, std::string, double>, ReportRow> groups;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.variant_id, r.corruption_mode, r.snr_condition);
    auto& row = groups[key];
    if (row.n_clips == 0) {
      row.variant_id = r.variant_id;
      row.corruption_mode = r.corruption_mode;
      row.snr_db = r.snr_condition;
    }
    row.si_sdr_db += r.si_sdr_db;
    row.stoi += r.stoi;
    row.n_clips += 1;
  }
  std::vector<ReportRow> rows;
  rows.reserve(groups.size());
  for (auto& [key, row] : groups) {
    row.si_sdr_db /= row.n_clips;
    row.stoi /= row.n_clips;
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "variant_id,corruption_mode,snr_db,si_sdr_db,stoi,n_clips\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6f,%.6f,%d\n", r.variant_id.c_str(),
                  r.corruption_mode.c_str(), r.snr_db, r.si_sdr_db, r.stoi, r.n_clips);
    os << buf;
  }
  return os.str();
}

std::string to_table(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %-12s %8s %10s %8s %8s\n", "variant",
                "corruption", "snr_db", "si_sdr_db", "stoi", "n_clips");
  os << buf;
  os << std::string(76, '-') << "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %-12s %8.1f %10.3f %8.4f %8d\n",
                  r.variant_id.c_str(), r.corruption_mode.c_str(), r.snr_db,
                  r.si_sdr_db, r.stoi, r.n_clips);
    os << buf;
  }
  return os.str();
}

void write_report(const std::string& csv_path, const std::string& txt_path,
                  const std::vector<ReportRow>& rows) {
  {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << to_csv(rows);
  }
  {
    std::ofstream f(txt_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + txt_path);
    f << to_table(rows);
  }
}

}  // namespace davse::metrics
