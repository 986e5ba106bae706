#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "davse/datagen.hpp"
#include "davse/dsp.hpp"
#include "davse/wav.hpp"

using namespace davse;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const char* stem) {
  const fs::path p = fs::temp_directory_path() / (std::string("davse_dg_") + stem);
  fs::remove_all(p);
  return p.string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::vector<char>(std::istreambuf_iterator<char>(f),
                           std::istreambuf_iterator<char>());
}

datagen::CorpusSpec tiny_spec() {
  datagen::CorpusSpec spec;
  spec.train_clips = 2;
  spec.val_clips = 1;
  spec.test_clips = 1;
  spec.n_speakers = 3;
  spec.snr_set = {-5.0, 0.0};
  spec.seed = 7;
  spec.duration = 0.5;
  spec.n_frames = 8;
  spec.frame_size = 32;
  return spec;
}

// Median pixel intensity of the identity band (rows [20,32) at 112x112).
double band_median(const datagen::VideoClip& v) {
  std::vector<uint8_t> px;
  for (int f = 0; f < v.n; ++f)
    for (int r = 20; r < 32; ++r)
      for (int c = 0; c < v.w; ++c) px.push_back(v.at(f, r, c));
  std::nth_element(px.begin(), px.begin() + px.size() / 2, px.end());
  return px[px.size() / 2];
}

int lip_pixels(const datagen::VideoClip& v, int frame) {
  int count = 0;
  for (int r = 60; r <= 96; ++r)
    for (int c = 36; c <= 76; ++c)
      if (std::abs(v.at(frame, r, c) - 40) <= 12) ++count;
  return count;
}

}  // namespace

TEST_CASE("utterances have the right length, peak, and envelope contract") {
  datagen::SpeakerProfile p;
  p.base_f0 = 150.0;
  const auto u = datagen::synth_utterance(p, 2.55, 99, 16000, 64);
  CHECK(u.wave.samples.size() == 40800);
  CHECK(u.wave.sample_rate == 16000);
  double peak = 0.0;
  for (double v : u.wave.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.9).epsilon(1e-9));

  REQUIRE(u.envelope.size() == 64);
  double emax = 0.0;
  for (double e : u.envelope) {
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    emax = std::max(emax, e);
  }
  CHECK(emax == doctest::Approx(1.0).epsilon(1e-12));

  // The envelope is the max-normalized per-frame RMS of the waveform.
  std::vector<double> ref(64, 0.0);
  double rmax = 0.0;
  const size_t total = u.wave.samples.size();
  for (int f = 0; f < 64; ++f) {
    const size_t a = total * f / 64, b = total * (f + 1) / 64;
    double acc = 0.0;
    for (size_t i = a; i < b; ++i) acc += u.wave.samples[i] * u.wave.samples[i];
    ref[f] = std::sqrt(acc / static_cast<double>(b - a));
    rmax = std::max(rmax, ref[f]);
  }
  for (int f = 0; f < 64; ++f)
    CHECK(u.envelope[f] == doctest::Approx(ref[f] / rmax).epsilon(1e-12));

  // Same seed reproduces; different seed differs.
  const auto u2 = datagen::synth_utterance(p, 2.55, 99, 16000, 64);
  CHECK(u2.wave.samples == u.wave.samples);
  const auto u3 = datagen::synth_utterance(p, 2.55, 100, 16000, 64);
  CHECK(u3.wave.samples != u.wave.samples);
}

TEST_CASE("speaker profiles are deterministic and inside the stated ranges") {
  const auto spk = datagen::make_speakers(20, 11);
  REQUIRE(spk.size() == 20);
  CHECK(spk[0].speaker_id == "spk00");
  CHECK(spk[19].speaker_id == "spk19");
  for (const auto& p : spk) {
    CHECK(p.base_f0 >= 90.0);
    CHECK(p.base_f0 <= 250.0);
    CHECK(p.spectral_tilt >= 0.5);
    CHECK(p.spectral_tilt <= 0.9);
  }
  const auto again = datagen::make_speakers(20, 11);
  for (size_t i = 0; i < spk.size(); ++i) {
    CHECK(again[i].base_f0 == spk[i].base_f0);
    CHECK(again[i].face_seed == spk[i].face_seed);
  }
  // Profiles actually vary across the roster.
  double lo = 1e9, hi = -1e9;
  for (const auto& p : spk) {
    lo = std::min(lo, p.base_f0);
    hi = std::max(hi, p.base_f0);
  }
  CHECK(hi - lo > 20.0);
}

TEST_CASE("noise generators: length, determinism, spectra, unknown kind") {
  for (const char* kind : {"white", "pink", "modulated", "babble"}) {
    CAPTURE(kind);
    const auto n = datagen::synth_noise(kind, 0.5, 3, 16000);
    CHECK(n.samples.size() == 8000);
    CHECK(n.rms() > 0.0);
    const auto n2 = datagen::synth_noise(kind, 0.5, 3, 16000);
    CHECK(n2.samples == n.samples);
    const auto n3 = datagen::synth_noise(kind, 0.5, 4, 16000);
    CHECK(n3.samples != n.samples);
  }
  CHECK_THROWS_AS(datagen::synth_noise("brown", 0.5, 3, 16000),
                  std::invalid_argument);

  // Pink noise concentrates energy at low frequencies relative to white.
  auto band_energy = [](const dsp::Waveform& w, double lo, double hi) {
    std::vector<std::complex<double>> buf(8192, 0.0);
    for (size_t i = 0; i < w.samples.size(); ++i) buf[i] = w.samples[i];
    dsp::fft(buf, false);
    double acc = 0.0;
    for (size_t k = 0; k <= buf.size() / 2; ++k) {
      const double f = k * 16000.0 / 8192.0;
      if (f >= lo && f < hi) acc += std::norm(buf[k]);
    }
    return acc;
  };
  const auto white = datagen::synth_noise("white", 0.5, 3, 16000);
  const auto pink = datagen::synth_noise("pink", 0.5, 3, 16000);
  const double white_ratio =
      band_energy(white, 0.0, 500.0) / band_energy(white, 4000.0, 8000.0);
  const double pink_ratio =
      band_energy(pink, 0.0, 500.0) / band_energy(pink, 4000.0, 8000.0);
  CHECK(pink_ratio > 4.0 * white_ratio);
}

TEST_CASE("rendered video encodes pitch in the identity band") {
  for (double f0 : {95.0, 160.0, 245.0}) {
    CAPTURE(f0);
    datagen::SpeakerProfile p;
    p.base_f0 = f0;
    const std::vector<double> env(8, 0.5);
    const auto v = datagen::render_video(p, env, 21, 112);
    REQUIRE(v.n == 8);
    REQUIRE(v.h == 112);
    const double recovered = 90.0 + 160.0 * (band_median(v) - 80.0) / 120.0;
    CHECK(std::abs(recovered - f0) <= 8.0);
  }
}

TEST_CASE("lip aperture follows the audio envelope") {
  datagen::SpeakerProfile p;
  const std::vector<double> env = {0.0, 0.5, 1.0};
  const auto v = datagen::render_video(p, env, 5, 112);
  const int closed = lip_pixels(v, 0);
  const int half = lip_pixels(v, 1);
  const int open = lip_pixels(v, 2);
  CHECK(closed < half);
  CHECK(half < open);

  // Same seed reproduces the clip bitwise.
  const auto v2 = datagen::render_video(p, env, 5, 112);
  CHECK(v2.frames == v.frames);
}

TEST_CASE("video container round trips and rejects foreign files") {
  datagen::SpeakerProfile p;
  const auto v = datagen::render_video(p, {0.2, 0.9}, 31, 32);
  const std::string path = scratch_dir("vid") + ".avv";
  datagen::write_video(path, v);
  const auto r = datagen::read_video(path);
  CHECK(r.n == v.n);
  CHECK(r.h == v.h);
  CHECK(r.w == v.w);
  CHECK(r.frames == v.frames);
  fs::remove(path);

  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFF not a video";
  }
  CHECK_THROWS_AS(datagen::read_video(path), std::runtime_error);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write("AVSEVID1", 8);
    const uint32_t dims[3] = {4, 16, 16};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write("xx", 2);  // far too short
  }
  CHECK_THROWS_AS(datagen::read_video(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("whole-frame and region corruption geometry") {
  datagen::SpeakerProfile p;
  const auto v = datagen::render_video(p, {0.0, 1.0, 0.4}, 17, 112);

  const auto same = datagen::corrupt_video(v, "none", 1);
  CHECK(same.frames == v.frames);

  double mean = 0.0;
  for (uint8_t px : v.frames) mean += px;
  mean /= static_cast<double>(v.frames.size());
  const uint8_t fill = static_cast<uint8_t>(std::lround(mean));

  const auto whole = datagen::corrupt_video(v, "mask_whole", 1);
  for (uint8_t px : whole.frames) CHECK(px == fill);

  const auto region = datagen::corrupt_video(v, "mask_region", 1);
  for (int f = 0; f < v.n; ++f)
    for (int r = 0; r < v.h; ++r)
      for (int c = 0; c < v.w; ++c) {
        const bool inside = r >= 62 && r <= 94 && c >= 38 && c <= 74;
        if (inside)
          REQUIRE(region.at(f, r, c) == fill);
        else
          REQUIRE(region.at(f, r, c) == v.at(f, r, c));
      }

  CHECK_THROWS_AS(datagen::corrupt_video(v, "blur", 1), std::invalid_argument);
}

TEST_CASE("random mask affects the requested extent and is deterministic") {
  datagen::SpeakerProfile p;
  const auto v = datagen::render_video(p, std::vector<double>(8, 0.5), 23, 112);

  Rng rng = Rng::stream(2, hash_label("mask"));
  const auto m = datagen::apply_random_mask(v, 0.5, 0.25, rng);
  std::vector<int> changed(v.n, 0);
  for (int f = 0; f < v.n; ++f)
    for (int r = 0; r < v.h; ++r)
      for (int c = 0; c < v.w; ++c)
        if (m.at(f, r, c) != v.at(f, r, c)) ++changed[f];
  int affected_frames = 0;
  for (int f = 0; f < v.n; ++f) {
    if (changed[f] > 0) ++affected_frames;
    // 0.25 of a 112x112 frame is a 56x56 box.
    CHECK(changed[f] <= 56 * 56);
  }
  CHECK(affected_frames <= 4);  // ceil(0.5 * 8)
  CHECK(affected_frames >= 1);
  // Affected frames are consecutive.
  int first = -1, last = -1;
  for (int f = 0; f < v.n; ++f)
    if (changed[f] > 0) {
      if (first < 0) first = f;
      last = f;
    }
  CHECK(last - first + 1 == affected_frames);

  Rng rng2 = Rng::stream(2, hash_label("mask"));
  const auto m2 = datagen::apply_random_mask(v, 0.5, 0.25, rng2);
  CHECK(m2.frames == m.frames);

  Rng rng3 = Rng::stream(2, hash_label("mask"));
  const auto noop = datagen::apply_random_mask(v, 0.5, 0.0, rng3);
  CHECK(noop.frames == v.frames);

  const auto c1 = datagen::corrupt_video(v, "random_mask", 9);
  const auto c2 = datagen::corrupt_video(v, "random_mask", 9);
  CHECK(c1.frames == c2.frames);
}

TEST_CASE("corpus build: layout, manifest fidelity, determinism, overwrite") {
  const auto spec = tiny_spec();
  const std::string dir = scratch_dir("corpus");
  const std::string mpath = datagen::build_corpus(spec, dir, false);
  CHECK(fs::exists(mpath));

  const auto manifest = datagen::load_manifest(mpath);
  REQUIRE(manifest.size() == 8);  // 4 clips x 2 SNRs

  std::vector<std::string> ids;
  for (const auto& e : manifest) ids.push_back(e.clip_id);
  CHECK(std::count(ids.begin(), ids.end(), "train_0000") == 2);
  CHECK(std::count(ids.begin(), ids.end(), "train_0001") == 2);
  CHECK(std::count(ids.begin(), ids.end(), "val_0000") == 2);
  CHECK(std::count(ids.begin(), ids.end(), "test_0000") == 2);

  for (const auto& e : manifest) {
    CAPTURE(e.clip_id);
    CAPTURE(e.snr_db);
    const auto clean = read_wav(dir + "/" + e.clean_path);
    const auto video = datagen::read_video(dir + "/" + e.video_path);
    CHECK(clean.samples.size() == 8000);
    CHECK(video.n == 8);
    CHECK(video.h == 32);

    // Re-mixing from the manifest seed reproduces the stated gain and hits
    // the stated SNR.
    const auto noise = datagen::synth_noise(e.noise_kind, spec.duration, e.seed,
                                            spec.sample_rate);
    const auto mix = dsp::mix_at_snr(clean, noise, e.snr_db);
    CHECK(mix.gain == doctest::Approx(e.gain).epsilon(1e-9));
    dsp::Waveform scaled = noise;
    for (double& s : scaled.samples) s *= e.gain;
    const double achieved =
        20.0 * std::log10(clean.rms() / scaled.rms());
    CHECK(std::abs(achieved - e.snr_db) <= 1e-6);
  }

  // Rebuilding without overwrite refuses; with overwrite succeeds.
  CHECK_THROWS_AS(datagen::build_corpus(spec, dir, false), std::runtime_error);
  CHECK_NOTHROW(datagen::build_corpus(spec, dir, true));

  // A second build in a fresh directory is byte-identical.
  const std::string dir2 = scratch_dir("corpus2");
  const std::string mpath2 = datagen::build_corpus(spec, dir2, false);
  CHECK(slurp(mpath2) == slurp(mpath));
  CHECK(slurp(dir2 + "/clean/train_0000.wav") ==
        slurp(dir + "/clean/train_0000.wav"));
  CHECK(slurp(dir2 + "/video/test_0000.avv") ==
        slurp(dir + "/video/test_0000.avv"));

  auto bad = spec;
  bad.n_speakers = 2;
  CHECK_THROWS_AS(datagen::build_corpus(bad, scratch_dir("corpus3"), false),
                  std::invalid_argument);

  CHECK_THROWS_AS(datagen::load_manifest(dir + "/missing.json"),
                  std::runtime_error);

  fs::remove_all(dir);
  fs::remove_all(dir2);
  fs::remove_all(scratch_dir("corpus3"));
}
