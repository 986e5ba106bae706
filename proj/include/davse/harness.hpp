#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "davse/datagen.hpp"
#include "davse/dsp.hpp"
#include "davse/metrics.hpp"
#include "davse/model.hpp"

namespace davse::harness {

struct TrainSchedule {
  std::vector<int64_t> stage_steps{2000, 500, 500};  // s1, s2, s3
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  uint64_t seed = 0;
  std::vector<double> snr_sampling{-15.0, -10.0, -5.0, 0.0};
  int val_every = 100;  // validation cadence, in steps
  int val_mixtures = 16;

  int64_t total_steps() const {
    int64_t s = 0;
    for (int64_t v : stage_steps) s += v;
    return s;
  }
  // Stage (1-3) a given global step index belongs to.
  int stage_of(int64_t step) const {
    return (step < stage_steps[0])                    ? 1
           : (step < stage_steps[0] + stage_steps[1]) ? 2
                                                      : 3;
  }
  void validate() const;
};

// Three-stage Adam training over on-the-fly mixtures. Stage 2 freezes the
// audio encoder and the visual front-end (everything before SAM); for the
// audio-only variant it degenerates to the encoder alone, with a warning.
// Validation loss on a fixed mixture subset is computed every val_every
// steps and the best-validation snapshot is kept inside the checkpoint.
// Passing a resume checkpoint continues an interrupted run bitwise.
// Log lines: "<step> <stage> <train_loss> <val_loss|->".
model::Checkpoint train(const model::ModelConfig& cfg, const dsp::StftConfig& stft_cfg,
                        const std::string& corpus_dir, const TrainSchedule& sched,
                        std::ostream* log = nullptr,
                        const model::Checkpoint* resume = nullptr);

// Mask-and-reconstruct enhancement. Inputs longer than the model's native
// window are processed in 50%-overlap windows with raised-cosine cross-fade;
// output length always equals input length. Video may be null only for the
// audio-only variant.
dsp::Waveform enhance(model::DualAvseNet<float>& net, const dsp::StftConfig& stft_cfg,
                      const dsp::Waveform& noisy, const datagen::VideoClip* video);

// Convenience wrapper: instantiates the network from the checkpoint, using
// the best-validation snapshot when one is present.
dsp::Waveform enhance(const model::Checkpoint& ck, const dsp::Waveform& noisy,
                      const datagen::VideoClip* video);

struct EvalOptions {
  std::string split = "test";
  std::string corruption_mode = "none";
  std::string variant_id;  // row label; defaults to cfg.variant "(visual_input)"
  int jobs = 1;
};

// Enhances every manifest mixture of the requested split (re-mixed exactly
// from the stored noise seed and gain) and scores it against the clean clip.
std::vector<metrics::MetricsRecord> evaluate(const model::Checkpoint& ck,
                                             const std::string& corpus_dir,
                                             const EvalOptions& opts);

// Scores the unprocessed mixtures themselves (the "noisy" baseline row).
std::vector<metrics::MetricsRecord> evaluate_noisy(const std::string& corpus_dir,
                                                   const std::string& split,
                                                   int jobs = 1);

struct AblationResult {
  std::vector<metrics::ReportRow> rows;
  std::vector<std::string> checkpoint_paths;  // one per variant, in order
};

// Trains every (variant, visual_input) pair from the same seed, evaluates on
// the test split, and writes ablation.csv / ablation.txt plus one checkpoint
// per variant into out_dir.
AblationResult run_ablation(const model::ModelConfig& base_cfg,
                            const dsp::StftConfig& stft_cfg,
                            const std::string& corpus_dir, const TrainSchedule& sched,
                            const std::vector<std::pair<std::string, std::string>>& variants,
                            const std::string& out_dir, int jobs = 1,
                            std::ostream* log = nullptr);

struct RobustnessResult {
  std::vector<metrics::ReportRow> rows;  // 7 condition rows x SNR groups
  // Percent drop of the all-metric, all-SNR mean vs the matching "none" row.
  std::vector<std::pair<std::string, double>> degradation;
};

// Evaluates the face model under {none, mask_whole, mask_region, random_mask}
// and the lip model under {none, mask_whole, random_mask}, writing
// robustness.csv / robustness.txt / degradation.csv into out_dir.
RobustnessResult run_robustness(const std::string& ckpt_face_path,
                                const std::string& ckpt_lip_path,
                                const std::string& corpus_dir,
                                const std::string& out_dir, int jobs = 1);

// Degradation statistic shared with the report writer (exposed for tests):
// 100 * (base_mean - cur_mean) / base_mean over all metrics and SNRs.
double degradation_percent(const std::vector<metrics::ReportRow>& rows,
                           const std::string& variant_id,
                           const std::string& base_mode, const std::string& cur_mode);

}  // namespace davse::harness
