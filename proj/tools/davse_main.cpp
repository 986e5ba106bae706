// davse: corpus synthesis, training, enhancement, evaluation, and the
// ablation / robustness experiment runners behind one executable.
//
// Exit codes: 0 success, 2 usage or input error, 1 internal error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "davse/config.hpp"
#include "davse/harness.hpp"
#include "davse/plot.hpp"
#include "davse/wav.hpp"

namespace fs = std::filesystem;
using namespace davse;

namespace {

std::string snr_label(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%gdB", snr);
  return buf;
}

// One grouped bar chart per metric: clusters per SNR, bars per condition.
void write_metric_plots(const std::string& out_dir,
                        const std::vector<metrics::ReportRow>& rows) {
  std::vector<double> snrs;
  std::vector<std::string> conds;  // "variant" or "variant mode", input order
  for (const auto& r : rows) {
    if (std::find(snrs.begin(), snrs.end(), r.snr_db) == snrs.end())
      snrs.push_back(r.snr_db);
    const std::string c =
        r.corruption_mode == "none" ? r.variant_id
                                    : r.variant_id + " " + r.corruption_mode;
    if (std::find(conds.begin(), conds.end(), c) == conds.end()) conds.push_back(c);
  }
  std::sort(snrs.begin(), snrs.end());

  std::vector<std::string> groups;
  groups.reserve(snrs.size());
  for (double s : snrs) groups.push_back(snr_label(s));

  struct MetricDef {
    const char* name;
    const char* file;
    double metrics::ReportRow::*field;
  };
  const MetricDef defs[] = {{"SI-SDR", "si_sdr.png", &metrics::ReportRow::si_sdr_db},
                            {"STOI", "stoi.png", &metrics::ReportRow::stoi}};
  for (const auto& def : defs) {
    std::vector<plot::Series> series;
    for (const auto& c : conds) {
      plot::Series s;
      s.label = c;
      s.values.assign(snrs.size(), 0.0);
      series.push_back(std::move(s));
    }
    for (const auto& r : rows) {
      const std::string c =
          r.corruption_mode == "none" ? r.variant_id
                                      : r.variant_id + " " + r.corruption_mode;
      const size_t si = static_cast<size_t>(
          std::find(conds.begin(), conds.end(), c) - conds.begin());
      const size_t gi = static_cast<size_t>(
          std::find(snrs.begin(), snrs.end(), r.snr_db) - snrs.begin());
      series[si].values[gi] = r.*(def.field);
    }
    plot::bar_chart(out_dir + "/" + def.file,
                    std::string(def.name) + " by SNR", def.name, groups, series);
  }
}

uint64_t resolve_seed(const CLI::Option* seed_opt, uint64_t flag_seed,
                      bool& have_seed) {
  if (seed_opt->count() > 0) {
    have_seed = true;
    return flag_seed;
  }
  if (const char* env = std::getenv("DAVSE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw std::invalid_argument(std::string("DAVSE_SEED is not an integer: ") + env);
    have_seed = true;
    return static_cast<uint64_t>(v);
  }
  have_seed = false;
  return 0;
}

std::vector<std::pair<std::string, std::string>> parse_variants(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      out.emplace_back(s, "face");
    else
      out.emplace_back(s.substr(0, colon), s.substr(colon + 1));
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"DualAVSE audio-visual speech enhancement toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  auto* seed_opt =
      app.add_option("--seed", seed, "Seed for corpus synthesis and training "
                                     "(falls back to DAVSE_SEED)");
  app.add_option("--jobs", jobs, "Worker threads for evaluation (default 1; "
                                 "results are identical at any setting)")
      ->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic AV corpus");
  std::string synth_out;
  bool overwrite = false;
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_flag("--overwrite", overwrite, "Replace a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "Run the three-stage training");
  std::string train_corpus, train_out, train_resume, train_log;
  std::string train_variant, train_visual;
  train->add_option("--corpus", train_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint output path")->required();
  train->add_option("--resume", train_resume, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);
  train->add_option("--log", train_log,
                    "Training log path (default: <out>.log)");
  train->add_option("--variant", train_variant,
                    "Model variant override (aose, avse_concat, avse_mam, "
                    "avse_sam, dual_full)");
  train->add_option("--visual-input", train_visual,
                    "Visual input override (face, lip_crop)");

  // enhance
  auto* enh = app.add_subcommand("enhance", "Enhance a noisy WAV");
  std::string enh_ckpt, enh_in, enh_video, enh_out;
  enh->add_option("--ckpt", enh_ckpt, "Checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  enh->add_option("--in", enh_in, "Noisy input WAV")
      ->required()
      ->check(CLI::ExistingFile);
  enh->add_option("--video", enh_video, "Speaker video for AV variants")
      ->check(CLI::ExistingFile);
  enh->add_option("--out", enh_out, "Enhanced output WAV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  std::string ev_ckpt, ev_corpus, ev_out, ev_split = "test", ev_mode = "none";
  std::string ev_label;
  bool ev_noisy = false;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--corpus", ev_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--out", ev_out, "Report output directory")->required();
  ev->add_option("--split", ev_split, "Corpus split (default test)");
  ev->add_option("--corruption", ev_mode,
                 "Video corruption mode: none, mask_whole, mask_region, "
                 "random_mask (default none)");
  ev->add_option("--label", ev_label, "Row label override");
  ev->add_flag("--with-noisy", ev_noisy, "Append the unprocessed-noisy baseline");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate the variant ladder");
  std::string ab_corpus, ab_out;
  std::vector<std::string> ab_variants{"aose:face",      "avse_concat:face",
                                       "avse_mam:face",  "avse_sam:face",
                                       "dual_full:lip_crop", "dual_full:face"};
  ab->add_option("--corpus", ab_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--variants", ab_variants,
                 "variant[:visual_input] entries (default: full ladder)");

  // robustness
  auto* rb = app.add_subcommand("robustness",
                                "Evaluate visual-corruption robustness");
  std::string rb_face, rb_lip, rb_corpus, rb_out;
  rb->add_option("--ckpt-face", rb_face, "Face-input checkpoint")->required();
  rb->add_option("--ckpt-lip", rb_lip, "Lip-input checkpoint")->required();
  rb->add_option("--corpus", rb_corpus, "Corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  rb->add_option("--out", rb_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  config::RunConfig rc =
      config_path.empty() ? config::defaults() : config::load_file(config_path);
  bool have_seed = false;
  const uint64_t rseed = resolve_seed(seed_opt, seed, have_seed);
  if (have_seed) config::set_seed(rc, rseed);

  if (synth->parsed()) {
    const std::string manifest = datagen::build_corpus(rc.corpus, synth_out, overwrite);
    config::write_effective(rc, synth_out + "/effective_config.json");
    const auto rows = datagen::load_manifest(manifest);
    std::set<std::string> clips;
    for (const auto& r : rows) clips.insert(r.clip_id);
    std::cout << "manifest: " << manifest << "\n"
              << "clips: " << clips.size() << " (train " << rc.corpus.train_clips
              << ", val " << rc.corpus.val_clips << ", test " << rc.corpus.test_clips
              << "), mixture rows: " << rows.size() << ", speakers: "
              << rc.corpus.n_speakers << "\n";
    return 0;
  }

  if (train->parsed()) {
    if (!train_variant.empty()) rc.model.variant = train_variant;
    if (!train_visual.empty()) rc.model.visual_input = train_visual;
    if (!fs::exists(train_corpus + "/manifest.json"))
      throw std::invalid_argument("missing manifest: " + train_corpus +
                                  "/manifest.json");
    model::Checkpoint resume;
    const bool resuming = !train_resume.empty();
    if (resuming) resume = model::load_checkpoint(train_resume);
    if (train_log.empty()) train_log = train_out + ".log";
    std::ofstream log(train_log, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write log: " + train_log);
    auto ck = harness::train(rc.model, rc.stft, train_corpus, rc.train, &log,
                             resuming ? &resume : nullptr);
    model::save_checkpoint(train_out, ck);
    config::write_effective(rc, train_out + ".config.json");
    std::cout << "saved " << train_out << " (steps " << ck.step;
    if (ck.has_best()) std::cout << ", best val " << ck.best_val;
    std::cout << ")\n";
    return 0;
  }

  if (enh->parsed()) {
    const auto ck = model::load_checkpoint(enh_ckpt);
    const auto noisy = read_wav(enh_in);
    datagen::VideoClip video;
    const datagen::VideoClip* vp = nullptr;
    if (ck.cfg.has_visual()) {
      if (enh_video.empty())
        throw std::invalid_argument("variant " + ck.cfg.variant +
                                    " requires --video");
      video = datagen::read_video(enh_video);
      vp = &video;
    }
    const auto out = harness::enhance(ck, noisy, vp);
    write_wav(enh_out, out);
    std::cout << "wrote " << enh_out << " (" << out.size() << " samples)\n";
    return 0;
  }

  if (ev->parsed()) {
    const auto ck = model::load_checkpoint(ev_ckpt);
    harness::EvalOptions opts;
    opts.split = ev_split;
    opts.corruption_mode = ev_mode;
    opts.variant_id = ev_label;
    opts.jobs = jobs;
    auto records = harness::evaluate(ck, ev_corpus, opts);
    if (ev_noisy) {
      auto noisy = harness::evaluate_noisy(ev_corpus, ev_split, jobs);
      records.insert(records.end(), noisy.begin(), noisy.end());
    }
    const auto rows = metrics::aggregate(records);
    fs::create_directories(ev_out);
    metrics::write_report(ev_out + "/eval.csv", ev_out + "/eval.txt", rows);
    write_metric_plots(ev_out, rows);
    config::write_effective(rc, ev_out + "/effective_config.json");
    std::cout << metrics::to_table(rows);
    return 0;
  }

  if (ab->parsed()) {
    const auto variants = parse_variants(ab_variants);
    auto result = harness::run_ablation(rc.model, rc.stft, ab_corpus, rc.train,
                                        variants, ab_out, jobs, &std::cout);
    write_metric_plots(ab_out, result.rows);
    config::write_effective(rc, ab_out + "/effective_config.json");
    std::cout << metrics::to_table(result.rows);
    return 0;
  }

  if (rb->parsed()) {
    auto result = harness::run_robustness(rb_face, rb_lip, rb_corpus, rb_out, jobs);
    write_metric_plots(rb_out, result.rows);
    config::write_effective(rc, rb_out + "/effective_config.json");
    std::cout << metrics::to_table(result.rows);
    std::cout << "degradation (% drop of the all-metric, all-SNR mean):\n";
    for (const auto& [cond, pct] : result.degradation) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "  %-32s %8.3f\n", cond.c_str(), pct);
      std::cout << buf;
    }
    return 0;
  }

  return 2;  // unreachable: require_subcommand(1)
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
