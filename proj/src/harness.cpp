#include "davse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include "davse/wav.hpp"

namespace fs = std::filesystem;

namespace davse::harness {

namespace {

constexpr double kTrainMaskClip = 5.0;
constexpr double kNoBest = 1e300;
const char* kNoiseKinds[4] = {"white", "pink", "modulated", "babble"};

struct ClipRef {
  std::string clip_id, clean_path, video_path;
};

std::vector<datagen::ManifestEntry> split_rows(
    const std::vector<datagen::ManifestEntry>& rows, const std::string& split) {
  std::vector<datagen::ManifestEntry> out;
  const std::string prefix = split + "_";
  for (const auto& r : rows)
    if (r.clip_id.rfind(prefix, 0) == 0) out.push_back(r);
  return out;
}

std::vector<ClipRef> unique_clips(const std::vector<datagen::ManifestEntry>& rows) {
  std::vector<ClipRef> out;
  std::set<std::string> seen;
  for (const auto& r : rows)
    if (seen.insert(r.clip_id).second)
      out.push_back({r.clip_id, r.clean_path, r.video_path});
  return out;
}

std::string default_label(const model::ModelConfig& cfg) {
  if (!cfg.has_visual()) return cfg.variant;
  return cfg.variant + "(" + cfg.visual_input + ")";
}

// One prepared mixture: model input planes, cIRM target, preprocessed video.
struct Example {
  nn::Tensor<float> spec;    // [2,F,T]
  nn::Tensor<float> target;  // [2,F,T]
  nn::Tensor<float> video;   // [N,S,S]; empty for audio-only variants
};

Example assemble_example(const dsp::Waveform& clean, const dsp::Waveform& noisy,
                         const datagen::VideoClip* video,
                         const model::ModelConfig& cfg,
                         const dsp::StftConfig& stft_cfg) {
  const auto Sc = dsp::stft(clean, stft_cfg);
  const auto Sn = dsp::stft(noisy, stft_cfg);
  if (Sn.F != cfg.freq_bins || Sn.T != cfg.time_frames)
    throw std::invalid_argument("harness: clip length does not match the model window");
  const auto M = dsp::compute_cirm(Sc, Sn, kTrainMaskClip);
  Example ex;
  ex.spec = nn::Tensor<float>({2, cfg.freq_bins, cfg.time_frames});
  ex.target = nn::Tensor<float>({2, cfg.freq_bins, cfg.time_frames});
  const size_t ft = Sn.re.size();
  for (size_t i = 0; i < ft; ++i) {
    ex.spec.data[i] = static_cast<float>(Sn.re[i]);
    ex.spec.data[ft + i] = static_cast<float>(Sn.im[i]);
    ex.target.data[i] = static_cast<float>(M.re[i]);
    ex.target.data[ft + i] = static_cast<float>(M.im[i]);
  }
  if (cfg.has_visual()) {
    if (!video) throw std::invalid_argument("harness: variant requires video");
    if (video->n != cfg.n_frames || video->h != cfg.frame_size ||
        video->w != cfg.frame_size)
      throw std::invalid_argument("harness: video geometry mismatch");
    ex.video = model::preprocess_video<float>(video->frames, video->n, video->h,
                                              video->w, cfg.visual_input);
  }
  return ex;
}

// name-keyed Adam with L2-style weight decay folded into the gradient
struct Adam {
  double lr = 3e-4, wd = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, nn::Tensor<float>> m, v;

  static bool is_frozen(const std::string& name,
                        const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  void step(std::vector<nn::ParamRef<float>>& params,
            const std::vector<std::string>& freeze) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& p : params) {
      if (is_frozen(p.name, freeze)) continue;
      auto& mt = m.at(p.name);
      auto& vt = v.at(p.name);
      for (size_t i = 0; i < p.value->size(); ++i) {
        const double g =
            static_cast<double>(p.grad->data[i]) + wd * p.value->data[i];
        const double m2 = beta1 * mt.data[i] + (1.0 - beta1) * g;
        const double v2 = beta2 * vt.data[i] + (1.0 - beta2) * g * g;
        mt.data[i] = static_cast<float>(m2);
        vt.data[i] = static_cast<float>(v2);
        p.value->data[i] -=
            static_cast<float>(lr * (m2 / bc1) / (std::sqrt(v2 / bc2) + eps));
      }
    }
  }
};

double validate_loss(model::DualAvseNet<float>& net, const std::vector<Example>& vs,
                     const model::ModelConfig& cfg) {
  double acc = 0.0;
  for (const auto& ex : vs) {
    nn::Tensor<float> spec({1, 2, cfg.freq_bins, cfg.time_frames});
    std::copy(ex.spec.data.begin(), ex.spec.data.end(), spec.data.begin());
    nn::Tensor<float> tgt({1, 2, cfg.freq_bins, cfg.time_frames});
    std::copy(ex.target.data.begin(), ex.target.data.end(), tgt.data.begin());
    nn::Tensor<float> vid;
    if (cfg.has_visual()) {
      vid = nn::Tensor<float>({1, 1, cfg.n_frames, cfg.frame_size, cfg.frame_size});
      std::copy(ex.video.data.begin(), ex.video.data.end(), vid.data.begin());
    }
    auto res = net.forward(cfg.has_visual() ? &vid : nullptr, spec, false);
    acc += model::mse_loss<float>(res.mask, tgt, nullptr);
  }
  return acc / static_cast<double>(vs.size());
}

model::DualAvseNet<float> net_from_checkpoint(const model::Checkpoint& ck) {
  model::DualAvseNet<float> net(ck.cfg, ck.seed);
  model::load_net_from_checkpoint(ck, net, ck.has_best() ? "best/" : "");
  return net;
}

}  // namespace

void TrainSchedule::validate() const {
  if (stage_steps.size() != 3)
    throw std::invalid_argument("schedule: stage_steps must have exactly 3 entries");
  for (int64_t s : stage_steps)
    if (s < 0) throw std::invalid_argument("schedule: step counts must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("schedule: batch_size must be >= 1");
  if (learning_rate <= 0)
    throw std::invalid_argument("schedule: learning_rate must be > 0");
  if (weight_decay < 0)
    throw std::invalid_argument("schedule: weight_decay must be >= 0");
  if (snr_sampling.empty())
    throw std::invalid_argument("schedule: snr_sampling must be non-empty");
  if (val_every < 1) throw std::invalid_argument("schedule: val_every must be >= 1");
  if (val_mixtures < 1)
    throw std::invalid_argument("schedule: val_mixtures must be >= 1");
}

model::Checkpoint train(const model::ModelConfig& cfg, const dsp::StftConfig& stft_cfg,
                        const std::string& corpus_dir, const TrainSchedule& sched,
                        std::ostream* log, const model::Checkpoint* resume) {
  cfg.validate();
  stft_cfg.validate();
  sched.validate();
  if (stft_cfg.freq_bins() != cfg.freq_bins)
    throw std::invalid_argument("train: stft geometry does not match model freq_bins");

  const auto rows = datagen::load_manifest(corpus_dir + "/manifest.json");
  const auto train_rows = split_rows(rows, "train");
  const auto val_rows = split_rows(rows, "val");
  if (train_rows.empty() || val_rows.empty())
    throw std::invalid_argument("train: corpus must provide train and val splits");
  const auto train_clips = unique_clips(train_rows);

  model::DualAvseNet<float> net(cfg, sched.seed);
  std::vector<nn::ParamRef<float>> params;
  net.collect_params(params);

  Adam opt;
  opt.lr = sched.learning_rate;
  opt.wd = sched.weight_decay;
  for (auto& p : params) {
    opt.m.emplace(p.name, nn::Tensor<float>(p.value->shape));
    opt.v.emplace(p.name, nn::Tensor<float>(p.value->shape));
  }

  int64_t start = 0;
  double best_val = kNoBest;
  std::map<std::string, nn::Tensor<float>> best;  // keys without the best/ prefix
  if (resume) {
    if (resume->cfg.variant != cfg.variant ||
        resume->cfg.base_channels != cfg.base_channels ||
        resume->cfg.freq_bins != cfg.freq_bins ||
        resume->cfg.n_frames != cfg.n_frames ||
        resume->cfg.visual_input != cfg.visual_input)
      throw std::invalid_argument("train: resume checkpoint config mismatch");
    model::load_net_from_checkpoint(*resume, net, "");
    for (auto& p : params) {
      opt.m.at(p.name) = resume->tensors.at("adam/m/" + p.name);
      opt.v.at(p.name) = resume->tensors.at("adam/v/" + p.name);
    }
    opt.t = resume->step;
    start = resume->step;
    best_val = resume->best_val;
    for (const auto& [k, t] : resume->tensors)
      if (k.rfind("best/", 0) == 0) best[k.substr(5)] = t;
  }

  std::vector<std::string> stage2_freeze;
  if (cfg.has_visual()) {
    stage2_freeze = {"enc.", "frontend."};
  } else {
    stage2_freeze = {"enc."};
    if (sched.stage_steps[1] > 0 && log)
      *log << "# warning: audio-only variant has no visual front-end; "
              "stage 2 freezes the audio encoder only\n";
  }

  // fixed validation subset: the first val_mixtures manifest rows of the
  // val split, re-mixed exactly from their stored noise seeds and gains
  const int nval = static_cast<int>(
      std::min<size_t>(sched.val_mixtures, val_rows.size()));
  std::vector<Example> valset;
  valset.reserve(nval);
  for (int i = 0; i < nval; ++i) {
    const auto& r = val_rows[static_cast<size_t>(i)];
    const auto clean = read_wav(corpus_dir + "/" + r.clean_path);
    const double dur =
        static_cast<double>(clean.size()) / clean.sample_rate;
    const auto noise = datagen::synth_noise(r.noise_kind, dur, r.seed,
                                            clean.sample_rate);
    dsp::Waveform noisy = clean;
    for (long s = 0; s < clean.size(); ++s)
      noisy.samples[static_cast<size_t>(s)] +=
          r.gain * noise.samples[static_cast<size_t>(s)];
    datagen::VideoClip vc;
    if (cfg.has_visual()) vc = datagen::read_video(corpus_dir + "/" + r.video_path);
    valset.push_back(assemble_example(clean, noisy, cfg.has_visual() ? &vc : nullptr,
                                      cfg, stft_cfg));
  }

  const int64_t total = sched.total_steps();
  const int B = sched.batch_size;
  for (int64_t step = start; step < total; ++step) {
    const int stage = sched.stage_of(step);
    Rng r = Rng::stream(sched.seed, hash_label("train_step"),
                        static_cast<uint64_t>(step));
    nn::Tensor<float> spec({B, 2, cfg.freq_bins, cfg.time_frames});
    nn::Tensor<float> tgt({B, 2, cfg.freq_bins, cfg.time_frames});
    nn::Tensor<float> vid;
    if (cfg.has_visual())
      vid = nn::Tensor<float>({B, 1, cfg.n_frames, cfg.frame_size, cfg.frame_size});
    for (int b = 0; b < B; ++b) {
      const auto& clip =
          train_clips[static_cast<size_t>(r.uniform_int(train_clips.size()))];
      const std::string kind = kNoiseKinds[r.uniform_int(4)];
      const double snr =
          sched.snr_sampling[static_cast<size_t>(r.uniform_int(sched.snr_sampling.size()))];
      const uint64_t nseed = r.next_u64();

      const auto clean = read_wav(corpus_dir + "/" + clip.clean_path);
      const double dur =
          static_cast<double>(clean.size()) / clean.sample_rate;
      const auto noise = datagen::synth_noise(kind, dur, nseed, clean.sample_rate);
      const auto mix = dsp::mix_at_snr(clean, noise, snr);
      datagen::VideoClip vc;
      if (cfg.has_visual())
        vc = datagen::read_video(corpus_dir + "/" + clip.video_path);
      Example ex = assemble_example(clean, mix.noisy,
                                    cfg.has_visual() ? &vc : nullptr, cfg, stft_cfg);
      std::copy(ex.spec.data.begin(), ex.spec.data.end(),
                spec.data.begin() + static_cast<size_t>(b) * ex.spec.size());
      std::copy(ex.target.data.begin(), ex.target.data.end(),
                tgt.data.begin() + static_cast<size_t>(b) * ex.target.size());
      if (cfg.has_visual())
        std::copy(ex.video.data.begin(), ex.video.data.end(),
                  vid.data.begin() + static_cast<size_t>(b) * ex.video.size());
    }

    net.zero_grad();
    auto res = net.forward(cfg.has_visual() ? &vid : nullptr, spec, true);
    nn::Tensor<float> dmask;
    const double loss = model::mse_loss(res.mask, tgt, &dmask);
    net.backward(dmask);
    opt.step(params, stage == 2 ? stage2_freeze : std::vector<std::string>{});

    const bool do_val =
        ((step + 1) % sched.val_every == 0) || (step + 1 == total);
    double vloss = std::numeric_limits<double>::quiet_NaN();
    if (do_val && !valset.empty()) {
      vloss = validate_loss(net, valset, cfg);
      if (vloss < best_val) {
        best_val = vloss;
        best.clear();
        for (auto& p : params) best["param/" + p.name] = *p.value;
        std::vector<std::pair<std::string, nn::Tensor<float>*>> st;
        net.collect_state(st);
        for (auto& [name, t] : st) best["state/" + name] = *t;
      }
    }
    if (log) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%lld %d %.6f ",
                    static_cast<long long>(step + 1), stage, loss);
      *log << buf;
      if (std::isnan(vloss)) {
        *log << "-\n";
      } else {
        std::snprintf(buf, sizeof(buf), "%.6f\n", vloss);
        *log << buf;
      }
      log->flush();
    }
  }

  model::Checkpoint ck;
  ck.cfg = cfg;
  ck.stft = stft_cfg;
  ck.seed = sched.seed;
  ck.step = total;
  ck.best_val = best_val;
  model::fill_checkpoint_from_net(net, ck, "");
  for (auto& p : params) {
    ck.tensors["adam/m/" + p.name] = opt.m.at(p.name);
    ck.tensors["adam/v/" + p.name] = opt.v.at(p.name);
  }
  for (const auto& [k, t] : best) ck.tensors["best/" + k] = t;
  return ck;
}

dsp::Waveform enhance(model::DualAvseNet<float>& net, const dsp::StftConfig& stft_cfg,
                      const dsp::Waveform& noisy, const datagen::VideoClip* video) {
  const auto& cfg = net.cfg;
  if (noisy.sample_rate != stft_cfg.sample_rate)
    throw std::invalid_argument("enhance: sample rate mismatch");
  const long win = static_cast<long>(cfg.time_frames - 1) * stft_cfg.hop;
  const long len = noisy.size();
  if (len < win)
    throw std::invalid_argument("enhance: input shorter than the model window");
  if (cfg.has_visual()) {
    if (!video) throw std::invalid_argument("enhance: variant requires video");
    if (video->h != cfg.frame_size || video->w != cfg.frame_size)
      throw std::invalid_argument("enhance: video frame size mismatch");
    if (video->n < cfg.n_frames)
      throw std::invalid_argument("enhance: video has too few frames");
  }

  std::vector<long> positions;
  const long hopw = win / 2;
  for (long p = 0; p + win < len; p += hopw) positions.push_back(p);
  if (positions.empty() || positions.back() != len - win)
    positions.push_back(len - win);

  dsp::Waveform out;
  out.sample_rate = noisy.sample_rate;
  out.samples.assign(static_cast<size_t>(len), 0.0);
  long prev_end = -1;

  for (const long p : positions) {
    dsp::Waveform seg;
    seg.sample_rate = noisy.sample_rate;
    seg.samples.assign(noisy.samples.begin() + p, noisy.samples.begin() + p + win);
    const auto Sn = dsp::stft(seg, stft_cfg);

    nn::Tensor<float> spec({1, 2, cfg.freq_bins, cfg.time_frames});
    const size_t ft = Sn.re.size();
    for (size_t i = 0; i < ft; ++i) {
      spec.data[i] = static_cast<float>(Sn.re[i]);
      spec.data[ft + i] = static_cast<float>(Sn.im[i]);
    }
    nn::Tensor<float> vid;
    if (cfg.has_visual()) {
      long f0 = std::lround(static_cast<double>(p) * cfg.n_frames / win);
      f0 = std::clamp<long>(f0, 0, video->n - cfg.n_frames);
      std::vector<uint8_t> frames(
          video->frames.begin() + f0 * cfg.frame_size * cfg.frame_size,
          video->frames.begin() +
              (f0 + cfg.n_frames) * cfg.frame_size * cfg.frame_size);
      auto pre = model::preprocess_video<float>(frames, cfg.n_frames, cfg.frame_size,
                                                cfg.frame_size, cfg.visual_input);
      vid = nn::Tensor<float>({1, 1, cfg.n_frames, cfg.frame_size, cfg.frame_size});
      std::copy(pre.data.begin(), pre.data.end(), vid.data.begin());
    }
    auto res = net.forward(cfg.has_visual() ? &vid : nullptr, spec, false);

    dsp::ComplexMask M(Sn.F, Sn.T, 0.0);
    for (size_t i = 0; i < ft; ++i) {
      M.re[i] = res.mask.data[i];
      M.im[i] = res.mask.data[ft + i];
    }
    const auto Se = dsp::apply_mask(M, Sn);
    const auto enh = dsp::istft(Se, stft_cfg, win);

    if (prev_end < 0) {
      std::copy(enh.samples.begin(), enh.samples.end(),
                out.samples.begin() + p);
    } else {
      const long ov = std::max<long>(0, prev_end - p);
      for (long i = 0; i < win; ++i) {
        if (i < ov) {
          const double c =
              0.5 * (1.0 - std::cos(3.14159265358979323846 * (i + 0.5) / ov));
          out.samples[static_cast<size_t>(p + i)] =
              (1.0 - c) * out.samples[static_cast<size_t>(p + i)] +
              c * enh.samples[static_cast<size_t>(i)];
        } else {
          out.samples[static_cast<size_t>(p + i)] =
              enh.samples[static_cast<size_t>(i)];
        }
      }
    }
    prev_end = p + win;
  }
  return out;
}

dsp::Waveform enhance(const model::Checkpoint& ck, const dsp::Waveform& noisy,
                      const datagen::VideoClip* video) {
  auto net = net_from_checkpoint(ck);
  return enhance(net, ck.stft, noisy, video);
}

namespace {

metrics::MetricsRecord eval_row(model::DualAvseNet<float>& net,
                                const dsp::StftConfig& stft_cfg,
                                const std::string& corpus_dir,
                                const datagen::ManifestEntry& row,
                                const std::string& mode,
                                const std::string& label) {
  const auto clean = read_wav(corpus_dir + "/" + row.clean_path);
  const double dur = static_cast<double>(clean.size()) / clean.sample_rate;
  const auto noise =
      datagen::synth_noise(row.noise_kind, dur, row.seed, clean.sample_rate);
  dsp::Waveform noisy = clean;
  for (long s = 0; s < clean.size(); ++s)
    noisy.samples[static_cast<size_t>(s)] +=
        row.gain * noise.samples[static_cast<size_t>(s)];

  datagen::VideoClip vc;
  const datagen::VideoClip* vp = nullptr;
  if (net.cfg.has_visual()) {
    vc = datagen::read_video(corpus_dir + "/" + row.video_path);
    if (mode != "none") vc = datagen::corrupt_video(vc, mode, row.seed);
    vp = &vc;
  }
  const auto enhanced = enhance(net, stft_cfg, noisy, vp);
  metrics::ConditionTags tags;
  tags.snr_db = row.snr_db;
  tags.variant_id = label;
  tags.corruption_mode = mode;
  tags.clip_id = row.clip_id;
  return metrics::evaluate_clip(clean, enhanced, tags);
}

}  // namespace

std::vector<metrics::MetricsRecord> evaluate(const model::Checkpoint& ck,
                                             const std::string& corpus_dir,
                                             const EvalOptions& opts) {
  const auto all_rows = datagen::load_manifest(corpus_dir + "/manifest.json");
  const auto rows = split_rows(all_rows, opts.split);
  if (rows.empty())
    throw std::invalid_argument("evaluate: no manifest rows in split: " + opts.split);
  static const std::set<std::string> kModes{"none", "mask_whole", "mask_region",
                                            "random_mask"};
  if (!kModes.count(opts.corruption_mode))
    throw std::invalid_argument("evaluate: unknown corruption mode: " +
                                opts.corruption_mode);
  const std::string label =
      opts.variant_id.empty() ? default_label(ck.cfg) : opts.variant_id;

  auto net = net_from_checkpoint(ck);
  std::vector<metrics::MetricsRecord> out(rows.size());
  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < rows.size(); ++i)
      out[i] = eval_row(net, ck.stft, corpus_dir, rows[i], opts.corruption_mode, label);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j]() {
        model::DualAvseNet<float> local = net;  // independent caches per thread
        for (size_t i = static_cast<size_t>(j); i < rows.size();
             i += static_cast<size_t>(jobs))
          out[i] = eval_row(local, ck.stft, corpus_dir, rows[i],
                            opts.corruption_mode, label);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<metrics::MetricsRecord> evaluate_noisy(const std::string& corpus_dir,
                                                   const std::string& split,
                                                   int jobs) {
  const auto all_rows = datagen::load_manifest(corpus_dir + "/manifest.json");
  const auto rows = split_rows(all_rows, split);
  if (rows.empty())
    throw std::invalid_argument("evaluate_noisy: no manifest rows in split: " + split);
  std::vector<metrics::MetricsRecord> out(rows.size());
  auto work = [&](size_t i) {
    const auto& row = rows[i];
    const auto clean = read_wav(corpus_dir + "/" + row.clean_path);
    const double dur = static_cast<double>(clean.size()) / clean.sample_rate;
    const auto noise =
        datagen::synth_noise(row.noise_kind, dur, row.seed, clean.sample_rate);
    dsp::Waveform noisy = clean;
    for (long s = 0; s < clean.size(); ++s)
      noisy.samples[static_cast<size_t>(s)] +=
          row.gain * noise.samples[static_cast<size_t>(s)];
    metrics::ConditionTags tags;
    tags.snr_db = row.snr_db;
    tags.variant_id = "noisy";
    tags.corruption_mode = "none";
    tags.clip_id = row.clip_id;
    out[i] = metrics::evaluate_clip(clean, noisy, tags);
  };
  const int J = std::max(1, jobs);
  if (J == 1) {
    for (size_t i = 0; i < rows.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < J; ++j)
      pool.emplace_back([&, j]() {
        for (size_t i = static_cast<size_t>(j); i < rows.size();
             i += static_cast<size_t>(J))
          work(i);
      });
    for (auto& t : pool) t.join();
  }
  return out;
}

AblationResult run_ablation(const model::ModelConfig& base_cfg,
                            const dsp::StftConfig& stft_cfg,
                            const std::string& corpus_dir, const TrainSchedule& sched,
                            const std::vector<std::pair<std::string, std::string>>& variants,
                            const std::string& out_dir, int jobs, std::ostream* log) {
  if (variants.empty())
    throw std::invalid_argument("ablation: variant list must be non-empty");
  fs::create_directories(out_dir);

  AblationResult result;
  std::vector<metrics::MetricsRecord> records;
  for (const auto& [variant, vis] : variants) {
    model::ModelConfig cfg = base_cfg;
    cfg.variant = variant;
    cfg.visual_input = vis;
    cfg.validate();
    const std::string label = default_label(cfg);
    if (log) *log << "# training " << label << "\n";

    const std::string stem = variant + "_" + vis;
    std::ofstream tlog(out_dir + "/" + stem + ".log", std::ios::trunc);
    auto ck = train(cfg, stft_cfg, corpus_dir, sched, &tlog);
    const std::string ckpath = out_dir + "/" + stem + ".ckpt";
    model::save_checkpoint(ckpath, ck);
    result.checkpoint_paths.push_back(ckpath);

    EvalOptions opts;
    opts.split = "test";
    opts.corruption_mode = "none";
    opts.variant_id = label;
    opts.jobs = jobs;
    auto recs = evaluate(ck, corpus_dir, opts);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  result.rows = metrics::aggregate(records);
  metrics::write_report(out_dir + "/ablation.csv", out_dir + "/ablation.txt",
                        result.rows);
  return result;
}

double degradation_percent(const std::vector<metrics::ReportRow>& rows,
                           const std::string& variant_id,
                           const std::string& base_mode,
                           const std::string& cur_mode) {
  auto mean_of = [&](const std::string& mode, bool& found) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.variant_id == variant_id && r.corruption_mode == mode) {
        acc += r.si_sdr_db + r.stoi;
        n += 2;
      }
    found = n > 0;
    return found ? acc / n : 0.0;
  };
  bool bf = false, cf = false;
  const double base = mean_of(base_mode, bf);
  const double cur = mean_of(cur_mode, cf);
  if (!bf || !cf)
    throw std::invalid_argument("degradation: missing rows for requested modes");
  if (base == 0.0) return 0.0;
  return 100.0 * (base - cur) / base;
}

RobustnessResult run_robustness(const std::string& ckpt_face_path,
                                const std::string& ckpt_lip_path,
                                const std::string& corpus_dir,
                                const std::string& out_dir, int jobs) {
  if (!fs::exists(ckpt_face_path))
    throw std::invalid_argument("robustness: missing checkpoint: " + ckpt_face_path);
  if (!fs::exists(ckpt_lip_path))
    throw std::invalid_argument("robustness: missing checkpoint: " + ckpt_lip_path);
  const auto ck_face = model::load_checkpoint(ckpt_face_path);
  const auto ck_lip = model::load_checkpoint(ckpt_lip_path);
  if (!ck_face.cfg.has_visual() || ck_face.cfg.visual_input != "face")
    throw std::invalid_argument("robustness: first checkpoint must be a face model");
  if (!ck_lip.cfg.has_visual() || ck_lip.cfg.visual_input != "lip_crop")
    throw std::invalid_argument("robustness: second checkpoint must be a lip model");
  fs::create_directories(out_dir);

  const std::string face_label = default_label(ck_face.cfg);
  const std::string lip_label = default_label(ck_lip.cfg);
  const std::vector<std::string> face_modes{"none", "mask_whole", "mask_region",
                                            "random_mask"};
  const std::vector<std::string> lip_modes{"none", "mask_whole", "random_mask"};

  std::vector<metrics::MetricsRecord> records;
  auto run_modes = [&](const model::Checkpoint& ck, const std::string& label,
                       const std::vector<std::string>& modes) {
    for (const auto& mode : modes) {
      EvalOptions opts;
      opts.split = "test";
      opts.corruption_mode = mode;
      opts.variant_id = label;
      opts.jobs = jobs;
      auto recs = evaluate(ck, corpus_dir, opts);
      records.insert(records.end(), recs.begin(), recs.end());
    }
  };
  run_modes(ck_face, face_label, face_modes);
  run_modes(ck_lip, lip_label, lip_modes);

  RobustnessResult result;
  result.rows = metrics::aggregate(records);
  metrics::write_report(out_dir + "/robustness.csv", out_dir + "/robustness.txt",
                        result.rows);

  auto add_deg = [&](const std::string& label, const std::vector<std::string>& modes) {
    for (const auto& mode : modes)
      result.degradation.emplace_back(
          label + "/" + mode, degradation_percent(result.rows, label, "none", mode));
  };
  add_deg(face_label, face_modes);
  add_deg(lip_label, lip_modes);

  std::ofstream dout(out_dir + "/degradation.csv", std::ios::trunc);
  if (!dout)
    throw std::runtime_error("cannot write: " + out_dir + "/degradation.csv");
  dout << "condition,degradation_pct\n";
  for (const auto& [cond, pct] : result.degradation) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", pct);
    dout << cond << "," << buf << "\n";
  }
  return result;
}

}  // namespace davse::harness
