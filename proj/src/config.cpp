#include "davse/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace davse::config {

namespace {

void require_known(const nlohmann::json& j, const std::string& section,
                   const std::set<std::string>& known) {
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (!known.count(key)) {
      const std::string full = section.empty() ? key : section + "." + key;
      throw std::invalid_argument("unknown config key: " + full);
    }
  }
}

template <typename T>
void pick(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig defaults() { return RunConfig{}; }

void apply_json(RunConfig& rc, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: document must be an object");
  require_known(j, "", {"stft", "model", "train", "corpus"});

  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    require_known(s, "stft", {"sample_rate", "win_len", "hop", "fft_size"});
    pick(s, "sample_rate", rc.stft.sample_rate);
    pick(s, "win_len", rc.stft.win_len);
    pick(s, "hop", rc.stft.hop);
    pick(s, "fft_size", rc.stft.fft_size);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    require_known(m, "model",
                  {"base_channels", "n_frames", "freq_bins", "time_frames",
                   "frame_size", "variant", "visual_input", "temperature_init",
                   "backbone_width"});
    pick(m, "base_channels", rc.model.base_channels);
    pick(m, "n_frames", rc.model.n_frames);
    pick(m, "freq_bins", rc.model.freq_bins);
    pick(m, "time_frames", rc.model.time_frames);
    pick(m, "frame_size", rc.model.frame_size);
    pick(m, "variant", rc.model.variant);
    pick(m, "visual_input", rc.model.visual_input);
    pick(m, "temperature_init", rc.model.temperature_init);
    pick(m, "backbone_width", rc.model.backbone_width);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    require_known(t, "train",
                  {"stage_steps", "learning_rate", "weight_decay", "batch_size",
                   "seed", "snr_sampling", "val_every", "val_mixtures"});
    pick(t, "stage_steps", rc.train.stage_steps);
    pick(t, "learning_rate", rc.train.learning_rate);
    pick(t, "weight_decay", rc.train.weight_decay);
    pick(t, "batch_size", rc.train.batch_size);
    pick(t, "seed", rc.train.seed);
    pick(t, "snr_sampling", rc.train.snr_sampling);
    pick(t, "val_every", rc.train.val_every);
    pick(t, "val_mixtures", rc.train.val_mixtures);
  }
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    require_known(c, "corpus",
                  {"train_clips", "val_clips", "test_clips", "n_speakers", "snr_set",
                   "seed", "duration", "sample_rate", "n_frames", "frame_size"});
    pick(c, "train_clips", rc.corpus.train_clips);
    pick(c, "val_clips", rc.corpus.val_clips);
    pick(c, "test_clips", rc.corpus.test_clips);
    pick(c, "n_speakers", rc.corpus.n_speakers);
    pick(c, "snr_set", rc.corpus.snr_set);
    pick(c, "seed", rc.corpus.seed);
    pick(c, "duration", rc.corpus.duration);
    pick(c, "sample_rate", rc.corpus.sample_rate);
    pick(c, "n_frames", rc.corpus.n_frames);
    pick(c, "frame_size", rc.corpus.frame_size);
  }
}

RunConfig load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  RunConfig rc = defaults();
  apply_json(rc, j);
  return rc;
}

nlohmann::ordered_json to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  j["stft"] = {{"sample_rate", rc.stft.sample_rate},
               {"win_len", rc.stft.win_len},
               {"hop", rc.stft.hop},
               {"fft_size", rc.stft.fft_size}};
  j["model"] = {{"base_channels", rc.model.base_channels},
                {"n_frames", rc.model.n_frames},
                {"freq_bins", rc.model.freq_bins},
                {"time_frames", rc.model.time_frames},
                {"frame_size", rc.model.frame_size},
                {"variant", rc.model.variant},
                {"visual_input", rc.model.visual_input},
                {"temperature_init", rc.model.temperature_init},
                {"backbone_width", rc.model.backbone_width}};
  j["train"] = {{"stage_steps", rc.train.stage_steps},
                {"learning_rate", rc.train.learning_rate},
                {"weight_decay", rc.train.weight_decay},
                {"batch_size", rc.train.batch_size},
                {"seed", rc.train.seed},
                {"snr_sampling", rc.train.snr_sampling},
                {"val_every", rc.train.val_every},
                {"val_mixtures", rc.train.val_mixtures}};
  j["corpus"] = {{"train_clips", rc.corpus.train_clips},
                 {"val_clips", rc.corpus.val_clips},
                 {"test_clips", rc.corpus.test_clips},
                 {"n_speakers", rc.corpus.n_speakers},
                 {"snr_set", rc.corpus.snr_set},
                 {"seed", rc.corpus.seed},
                 {"duration", rc.corpus.duration},
                 {"sample_rate", rc.corpus.sample_rate},
                 {"n_frames", rc.corpus.n_frames},
                 {"frame_size", rc.corpus.frame_size}};
  return j;
}

void set_seed(RunConfig& rc, uint64_t seed) {
  rc.train.seed = seed;
  rc.corpus.seed = seed;
}

void write_effective(const RunConfig& rc, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write config echo: " + path);
  f << to_json(rc).dump(2) << "\n";
}

}  // namespace davse::config
