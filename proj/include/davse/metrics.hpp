#pragma once

#include <string>
#include <vector>

#include "davse/dsp.hpp"

namespace davse::metrics {

// Scale-invariant SDR in dB, capped to [-60, 60].
double si_sdr(const dsp::Waveform& ref, const dsp::Waveform& est);

// Short-time objective intelligibility in [0, 1]. Requires 16 kHz inputs of
// equal length >= 0.5 s; throws std::invalid_argument if fewer than one
// analysis segment survives silence removal.
double stoi(const dsp::Waveform& ref, const dsp::Waveform& est);

struct ConditionTags {
  double snr_db = 0.0;
  std::string variant_id;
  std::string corruption_mode;
  std::string clip_id;
};

struct MetricsRecord {
  double si_sdr_db = 0.0;
  double stoi = 0.0;
  double snr_condition = 0.0;
  std::string variant_id;
  std::string corruption_mode;
  std::string clip_id;
};

MetricsRecord evaluate_clip(const dsp::Waveform& ref, const dsp::Waveform& est,
                            const ConditionTags& tags);

struct ReportRow {
  std::string variant_id;
  std::string corruption_mode;
  double snr_db = 0.0;
  double si_sdr_db = 0.0;
  double stoi = 0.0;
  int n_clips = 0;
};

// Mean of each metric grouped by (variant_id, corruption_mode, snr_condition);
// rows ordered by variant, then corruption mode, then SNR ascending.
std::vector<ReportRow> aggregate(const std::vector<MetricsRecord>& records);

std::string to_csv(const std::vector<ReportRow>& rows);
std::string to_table(const std::vector<ReportRow>& rows);
void write_report(const std::string& csv_path, const std::string& txt_path,
                  const std::vector<ReportRow>& rows);

// Polyphase windowed-sinc resampler (used by STOI; exposed for tests).
std::vector<double> resample(const std::vector<double>& x, int sr_in, int sr_out);

}  // namespace davse::metrics
