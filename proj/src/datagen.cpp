#include "davse/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "davse/wav.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace davse::datagen {

namespace {
constexpr double kPi = 3.14159265358979323846;

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Band-pass a white-noise buffer by zeroing FFT bins outside [lo, hi] Hz.
std::vector<double> bandlimit(const std::vector<double>& x, double lo, double hi,
                              int sample_rate) {
  const size_t nfft = next_pow2(std::max<size_t>(x.size(), 16));
  std::vector<std::complex<double>> buf(nfft, 0.0);
  for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
  dsp::fft(buf, false);
  for (size_t k = 0; k < nfft; ++k) {
    const double f = std::min(k, nfft - k) * static_cast<double>(sample_rate) / nfft;
    if (f < lo || f > hi) buf[k] = 0.0;
  }
  dsp::fft(buf, true);
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = buf[i].real();
  return y;
}

void peak_normalize(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx > 0.0)
    for (double& v : x) v *= peak / mx;
}

// Quantize like the PCM16 writer so stored clips and in-memory mixing agree.
void quantize_pcm16(std::vector<double>& x) {
  for (double& v : x) {
    double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
    v = std::lrint(c * 32768.0) / 32768.0;
  }
}
}  // namespace

Utterance synth_utterance(const SpeakerProfile& profile, double duration,
                          uint64_t seed, int sample_rate, int n_frames) {
  Rng rng = Rng::stream(seed, hash_label("utterance"));
  const size_t total = static_cast<size_t>(std::llround(duration * sample_rate));
  std::vector<double> wave(total, 0.0);
  const int ramp = sample_rate / 50;  // 20 ms

  size_t pos = 0;
  while (pos < total) {
    const double seg_ms = rng.uniform(80.0, 240.0);
    size_t seg_len = static_cast<size_t>(seg_ms * sample_rate / 1000.0);
    seg_len = std::min(seg_len, total - pos);
    const double draw = rng.uniform();
    std::vector<double> seg(seg_len, 0.0);
    if (draw >= 0.1) {  // 10% silence
      const bool voiced = rng.uniform() < 0.8;
      if (voiced) {
        const double f0 = profile.base_f0 * std::pow(2.0, rng.uniform(-0.3, 0.3));
        const double gain = rng.uniform(0.3, 1.0);
        for (int k = 1; k <= 8; ++k) {
          const double amp = std::pow(profile.spectral_tilt, k);
          const double w = 2.0 * kPi * f0 * k / sample_rate;
          if (f0 * k >= sample_rate / 2.0) break;
          for (size_t i = 0; i < seg_len; ++i) seg[i] += amp * std::sin(w * i);
        }
        double rms = 0.0;
        for (double v : seg) rms += v * v;
        rms = std::sqrt(rms / std::max<size_t>(1, seg_len));
        if (rms > 0.0)
          for (double& v : seg) v *= gain * 0.2 / rms;
      } else {
        const double gain = rng.uniform(0.1, 0.4);
        std::vector<double> wn(seg_len);
        for (double& v : wn) v = rng.gaussian();
        seg = bandlimit(wn, 1000.0, 6000.0, sample_rate);
        double rms = 0.0;
        for (double v : seg) rms += v * v;
        rms = std::sqrt(rms / std::max<size_t>(1, seg_len));
        if (rms > 0.0)
          for (double& v : seg) v *= gain * 0.2 / rms;
      }
      // raised-cosine ramps at the segment edges
      const int r = std::min<size_t>(ramp, seg_len / 2);
      for (int i = 0; i < r; ++i) {
        const double g = 0.5 * (1.0 - std::cos(kPi * i / r));
        seg[i] *= g;
        seg[seg_len - 1 - i] *= g;
      }
    }
    std::copy(seg.begin(), seg.end(), wave.begin() + pos);
    pos += seg_len;
  }
  peak_normalize(wave, 0.9);

  // per-video-frame RMS envelope, max-normalized
  std::vector<double> env(n_frames, 0.0);
  double emax = 0.0;
  for (int f = 0; f < n_frames; ++f) {
    const size_t a = total * f / n_frames;
    const size_t b = total * (f + 1) / n_frames;
    double acc = 0.0;
    for (size_t i = a; i < b; ++i) acc += wave[i] * wave[i];
    env[f] = std::sqrt(acc / std::max<size_t>(1, b - a));
    emax = std::max(emax, env[f]);
  }
  if (emax > 0.0)
    for (double& v : env) v /= emax;

  Utterance out;
  out.wave.samples = std::move(wave);
  out.wave.sample_rate = sample_rate;
  out.envelope = std::move(env);
  return out;
}

namespace {
void fill_ellipse(VideoClip& v, int frame, double cx, double cy, double rx, double ry,
                  uint8_t intensity) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int r1 = std::min(v.h - 1, static_cast<int>(std::ceil(cy + ry)));
  for (int r = r0; r <= r1; ++r) {
    const double dy = (r - cy) / ry;
    const double span = 1.0 - dy * dy;
    if (span < 0.0) continue;
    const double dx = rx * std::sqrt(span);
    const int c0 = std::max(0, static_cast<int>(std::ceil(cx - dx)));
    const int c1 = std::min(v.w - 1, static_cast<int>(std::floor(cx + dx)));
    for (int c = c0; c <= c1; ++c)
      v.frames[(static_cast<size_t>(frame) * v.h + r) * v.w + c] = intensity;
  }
}
}  // namespace

VideoClip render_video(const SpeakerProfile& profile,
                       const std::vector<double>& envelope, uint64_t seed,
                       int frame_size) {
  const int n = static_cast<int>(envelope.size());
  VideoClip v;
  v.n = n;
  v.h = frame_size;
  v.w = frame_size;
  v.frames.assign(static_cast<size_t>(n) * frame_size * frame_size, 20);
  Rng rng = Rng::stream(seed, hash_label("video"));
  const double s = frame_size / 112.0;  // geometry is specified at 112x112

  const double band_i = 80.0 + 120.0 * (profile.base_f0 - 90.0) / 160.0;
  const uint8_t band = static_cast<uint8_t>(std::lround(std::clamp(band_i, 0.0, 255.0)));

  // distractor random walk inside the top-right 28x28 corner
  const int reg = static_cast<int>(std::lround(28 * s));
  const int dsz = static_cast<int>(std::lround(12 * s));
  int dx = v.w - reg + rng.uniform_int(reg - dsz + 1);
  int dy = rng.uniform_int(reg - dsz + 1);

  for (int f = 0; f < n; ++f) {
    fill_ellipse(v, f, 56 * s, 52 * s, 40 * s, 52 * s, 110);
    const int br0 = static_cast<int>(std::lround(20 * s));
    const int br1 = static_cast<int>(std::lround(32 * s));
    for (int r = br0; r < br1; ++r)
      for (int c = 0; c < v.w; ++c)
        v.frames[(static_cast<size_t>(f) * v.h + r) * v.w + c] = band;
    const double lip_ry = (2.0 + 14.0 * envelope[static_cast<size_t>(f)]) * s;
    fill_ellipse(v, f, 56 * s, 78 * s, 18 * s, lip_ry, 40);
    // distractor
    for (int r = dy; r < dy + dsz; ++r)
      for (int c = dx; c < dx + dsz; ++c)
        v.frames[(static_cast<size_t>(f) * v.h + r) * v.w + c] = 220;
    dx = std::clamp(dx + rng.uniform_int(-2, 2), v.w - reg, v.w - dsz);
    dy = std::clamp(dy + rng.uniform_int(-2, 2), 0, reg - dsz);
    // mild pixel noise
    for (int r = 0; r < v.h; ++r)
      for (int c = 0; c < v.w; ++c) {
        auto& px = v.frames[(static_cast<size_t>(f) * v.h + r) * v.w + c];
        const double nv = px + 3.0 * rng.gaussian();
        px = static_cast<uint8_t>(std::lround(std::clamp(nv, 0.0, 255.0)));
      }
  }
  return v;
}

dsp::Waveform synth_noise(const std::string& kind, double duration, uint64_t seed,
                          int sample_rate) {
  const size_t total = static_cast<size_t>(std::llround(duration * sample_rate));
  Rng rng = Rng::stream(seed, hash_label("noise"), hash_label(kind.c_str()));
  dsp::Waveform out;
  out.sample_rate = sample_rate;
  if (kind == "white") {
    out.samples.resize(total);
    for (double& v : out.samples) v = rng.gaussian();
  } else if (kind == "pink") {
    const size_t nfft = next_pow2(total);
    std::vector<std::complex<double>> buf(nfft);
    for (auto& v : buf) v = rng.gaussian();
    dsp::fft(buf, false);
    const double fref = static_cast<double>(sample_rate) / nfft;  // first bin
    for (size_t k = 0; k < nfft; ++k) {
      const size_t kk = std::min(k, nfft - k);
      if (kk == 0) {
        buf[k] = 0.0;
        continue;
      }
      const double f = kk * static_cast<double>(sample_rate) / nfft;
      buf[k] *= std::sqrt(fref / f);  // power ~ 1/f
    }
    dsp::fft(buf, true);
    out.samples.resize(total);
    for (size_t i = 0; i < total; ++i) out.samples[i] = buf[i].real();
    double rms = out.rms();
    if (rms > 0.0)
      for (double& v : out.samples) v /= rms;
  } else if (kind == "modulated") {
    out.samples.resize(total);
    for (double& v : out.samples) v = rng.gaussian();
    std::vector<double> slow(total);
    for (double& v : slow) v = rng.gaussian();
    slow = bandlimit(slow, 0.5, 2.0, sample_rate);
    double mn = slow[0], mx = slow[0];
    for (double v : slow) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    const double range = (mx > mn) ? (mx - mn) : 1.0;
    for (size_t i = 0; i < total; ++i) {
      const double e = 0.1 + 0.9 * (slow[i] - mn) / range;
      out.samples[i] *= e;
    }
  } else if (kind == "babble") {
    out.samples.assign(total, 0.0);
    for (int s = 0; s < 4; ++s) {
      SpeakerProfile p;
      p.speaker_id = "babble";
      Rng prng = Rng::stream(seed, hash_label("babble_profile"), s);
      p.base_f0 = prng.uniform(90.0, 250.0);
      p.spectral_tilt = prng.uniform(0.5, 0.9);
      Utterance u = synth_utterance(p, duration, splitmix64(seed * 4 + s), sample_rate);
      for (size_t i = 0; i < total; ++i) out.samples[i] += u.wave.samples[i];
    }
    peak_normalize(out.samples, 0.9);
  } else {
    throw std::invalid_argument("synth_noise: unknown kind: " + kind);
  }
  return out;
}

std::vector<SpeakerProfile> make_speakers(int count, uint64_t seed) {
  std::vector<SpeakerProfile> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, hash_label("speaker"), i);
    SpeakerProfile p;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "spk%02d", i);
    p.speaker_id = buf;
    p.base_f0 = rng.uniform(90.0, 250.0);
    p.spectral_tilt = rng.uniform(0.5, 0.9);
    p.face_seed = rng.next_u64();
    out.push_back(std::move(p));
  }
  return out;
}

std::string build_corpus(const CorpusSpec& spec, const std::string& out_dir,
                         bool overwrite) {
  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !overwrite)
    throw std::runtime_error("output directory not empty (use overwrite): " + out_dir);
  fs::create_directories(root / "clean");
  fs::create_directories(root / "video");

  if (spec.n_speakers < 3)
    throw std::invalid_argument("corpus: need at least 3 speakers for disjoint splits");
  auto speakers = make_speakers(spec.n_speakers, spec.seed);
  // Disjoint speaker splits: ~80/10/10 with at least one speaker each.
  const int n_val_spk = std::max(1, spec.n_speakers / 10);
  const int n_test_spk = std::max(1, spec.n_speakers / 10);
  const int n_train_spk = spec.n_speakers - n_val_spk - n_test_spk;

  struct Split {
    const char* name;
    int clips;
    int spk_begin, spk_end;
  };
  const Split splits[3] = {{"train", spec.train_clips, 0, n_train_spk},
                           {"val", spec.val_clips, n_train_spk, n_train_spk + n_val_spk},
                           {"test", spec.test_clips, n_train_spk + n_val_spk,
                            spec.n_speakers}};

  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  const char* kinds[4] = {"white", "pink", "modulated", "babble"};
  for (const auto& sp : splits) {
    for (int i = 0; i < sp.clips; ++i) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", sp.name, i);
      const std::string clip_id = idbuf;
      const uint64_t clip_seed = Rng::stream(spec.seed, hash_label("clip"),
                                             hash_label(clip_id.c_str()))
                                     .next_u64();
      Rng crng(clip_seed);
      const auto& prof =
          speakers[static_cast<size_t>(sp.spk_begin +
                                       crng.uniform_int(sp.spk_end - sp.spk_begin))];
      Utterance u = synth_utterance(prof, spec.duration, crng.next_u64(),
                                    spec.sample_rate, spec.n_frames);
      quantize_pcm16(u.wave.samples);
      VideoClip video = render_video(prof, u.envelope, crng.next_u64(), spec.frame_size);

      const std::string clean_rel = "clean/" + clip_id + ".wav";
      const std::string video_rel = "video/" + clip_id + ".avv";
      write_wav((root / clean_rel).string(), u.wave);
      write_video((root / video_rel).string(), video);

      for (double snr : spec.snr_set) {
        const uint64_t noise_seed = crng.next_u64();
        const std::string kind = kinds[crng.uniform_int(4)];
        dsp::Waveform noise =
            synth_noise(kind, spec.duration, noise_seed, spec.sample_rate);
        const auto mix = dsp::mix_at_snr(u.wave, noise, snr);
        manifest.push_back(nlohmann::ordered_json{{"clip_id", clip_id},
                                                  {"clean_path", clean_rel},
                                                  {"video_path", video_rel},
                                                  {"noise_kind", kind},
                                                  {"snr_db", snr},
                                                  {"gain", mix.gain},
                                                  {"seed", noise_seed}});
      }
    }
  }
  const std::string mpath = (root / "manifest.json").string();
  std::ofstream f(mpath, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest: " + mpath);
  f << manifest.dump(1) << "\n";
  return mpath;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json j;
  f >> j;
  std::vector<ManifestEntry> out;
  out.reserve(j.size());
  for (const auto& row : j) {
    ManifestEntry e;
    e.clip_id = row.at("clip_id").get<std::string>();
    e.clean_path = row.at("clean_path").get<std::string>();
    e.video_path = row.at("video_path").get<std::string>();
    e.noise_kind = row.at("noise_kind").get<std::string>();
    e.snr_db = row.at("snr_db").get<double>();
    e.gain = row.at("gain").get<double>();
    e.seed = row.at("seed").get<uint64_t>();
    out.push_back(std::move(e));
  }
  return out;
}

namespace {
double clip_mean(const VideoClip& v) {
  double acc = 0.0;
  for (uint8_t p : v.frames) acc += p;
  return acc / static_cast<double>(v.frames.size());
}
}  // namespace

VideoClip apply_random_mask(const VideoClip& v, double fraction_t, double fraction_s,
                            Rng& rng) {
  VideoClip out = v;
  const uint8_t fill = static_cast<uint8_t>(std::lround(clip_mean(v)));
  const int n_aff = std::min<int>(
      v.n, static_cast<int>(std::ceil(fraction_t * v.n)));
  if (n_aff <= 0 || fraction_s <= 0.0) return out;
  const int f0 = rng.uniform_int(v.n - n_aff + 1);
  int mh = static_cast<int>(std::lround(std::sqrt(fraction_s) * v.h));
  mh = std::clamp(mh, 1, v.h);
  int mw = static_cast<int>(
      std::lround(fraction_s * v.h * v.w / static_cast<double>(mh)));
  mw = std::clamp(mw, 1, v.w);
  const int r0 = rng.uniform_int(v.h - mh + 1);
  const int c0 = rng.uniform_int(v.w - mw + 1);
  for (int f = f0; f < f0 + n_aff; ++f)
    for (int r = r0; r < r0 + mh; ++r)
      for (int c = c0; c < c0 + mw; ++c)
        out.frames[(static_cast<size_t>(f) * v.h + r) * v.w + c] = fill;
  return out;
}

VideoClip corrupt_video(const VideoClip& v, const std::string& mode, uint64_t seed) {
  if (mode == "none") return v;
  const uint8_t fill = static_cast<uint8_t>(std::lround(clip_mean(v)));
  if (mode == "mask_whole") {
    VideoClip out = v;
    std::fill(out.frames.begin(), out.frames.end(), fill);
    return out;
  }
  if (mode == "mask_region") {
    VideoClip out = v;
    const double s = v.h / 112.0;
    const int r0 = static_cast<int>(std::lround(62 * s));
    const int r1 = std::min(v.h - 1, static_cast<int>(std::lround(94 * s)));
    const int c0 = static_cast<int>(std::lround(38 * s));
    const int c1 = std::min(v.w - 1, static_cast<int>(std::lround(74 * s)));
    for (int f = 0; f < v.n; ++f)
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          out.frames[(static_cast<size_t>(f) * v.h + r) * v.w + c] = fill;
    return out;
  }
  if (mode == "random_mask") {
    Rng rng = Rng::stream(seed, hash_label("corrupt"));
    const double ft = rng.uniform();
    const double fs = rng.uniform();
    return apply_random_mask(v, ft, fs, rng);
  }
  throw std::invalid_argument("corrupt_video: unknown mode: " + mode);
}

void write_video(const std::string& path, const VideoClip& v) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write video: " + path);
  f.write("AVSEVID1", 8);
  const uint32_t dims[3] = {static_cast<uint32_t>(v.n), static_cast<uint32_t>(v.h),
                            static_cast<uint32_t>(v.w)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(v.frames.data()),
          static_cast<std::streamsize>(v.frames.size()));
  if (!f) throw std::runtime_error("short write on video: " + path);
}

VideoClip read_video(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open video: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "AVSEVID1", 8) != 0)
    throw std::runtime_error("not a video file: " + path);
  uint32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  VideoClip v;
  v.n = static_cast<int>(dims[0]);
  v.h = static_cast<int>(dims[1]);
  v.w = static_cast<int>(dims[2]);
  v.frames.resize(static_cast<size_t>(v.n) * v.h * v.w);
  f.read(reinterpret_cast<char*>(v.frames.data()),
         static_cast<std::streamsize>(v.frames.size()));
  if (!f) throw std::runtime_error("truncated video file: " + path);
  return v;
}

}  // namespace davse::datagen
