#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "davse/dsp.hpp"
#include "davse/rng.hpp"

namespace davse::datagen {

struct SpeakerProfile {
  std::string speaker_id;
  double base_f0 = 140.0;      // Hz, in [90, 250]
  double spectral_tilt = 0.7;  // in [0.5, 0.9]
  uint64_t face_seed = 0;
};

struct VideoClip {
  int n = 0, h = 0, w = 0;
  std::vector<uint8_t> frames;  // [n][h][w] row-major

  uint8_t at(int f, int r, int c) const {
    return frames[(static_cast<size_t>(f) * h + r) * w + c];
  }
};

struct Utterance {
  dsp::Waveform wave;
  std::vector<double> envelope;  // per video frame, in [0,1], max-normalized
};

struct ManifestEntry {
  std::string clip_id;
  std::string clean_path;
  std::string video_path;
  std::string noise_kind;
  double snr_db = 0.0;
  double gain = 1.0;
  uint64_t seed = 0;
};

struct CorpusSpec {
  int train_clips = 500;
  int val_clips = 50;
  int test_clips = 50;
  int n_speakers = 20;
  std::vector<double> snr_set{-15.0, -10.0, -5.0, 0.0};
  uint64_t seed = 0;
  double duration = 2.55;
  int sample_rate = 16000;
  int n_frames = 64;
  int frame_size = 112;
};

// Pseudo-phoneme utterance synthesis driven by the speaker profile.
Utterance synth_utterance(const SpeakerProfile& profile, double duration,
                          uint64_t seed, int sample_rate = 16000, int n_frames = 64);

// Procedural face renderer: face ellipse, pitch-coded identity band,
// envelope-driven lip aperture, speech-independent distractor square.
VideoClip render_video(const SpeakerProfile& profile,
                       const std::vector<double>& envelope, uint64_t seed,
                       int frame_size = 112);

// Noise generators: white / pink / modulated / babble.
dsp::Waveform synth_noise(const std::string& kind, double duration, uint64_t seed,
                          int sample_rate = 16000);

// Deterministic speaker profiles for a corpus seed.
std::vector<SpeakerProfile> make_speakers(int count, uint64_t seed);

// Writes clean WAVs, videos, and the mixture manifest. Returns manifest path.
// Refuses to touch an existing non-empty directory unless overwrite is set.
std::string build_corpus(const CorpusSpec& spec, const std::string& out_dir,
                         bool overwrite);

std::vector<ManifestEntry> load_manifest(const std::string& path);

// Visual corruption modes (none / mask_whole / mask_region / random_mask).
VideoClip corrupt_video(const VideoClip& v, const std::string& mode, uint64_t seed);
// random_mask with explicit fractions (exposed for deterministic testing).
VideoClip apply_random_mask(const VideoClip& v, double fraction_t, double fraction_s,
                            Rng& rng);

// Video container: "AVSEVID1" magic, u32le N,H,W, then raw bytes.
void write_video(const std::string& path, const VideoClip& v);
VideoClip read_video(const std::string& path);

}  // namespace davse::datagen
