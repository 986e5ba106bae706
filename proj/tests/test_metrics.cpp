#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "davse/dsp.hpp"
#include "davse/metrics.hpp"
#include "test_util.hpp"

using namespace davse;

namespace {

dsp::Waveform mixed(double snr_db, uint64_t noise_seed = 12345) {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  const auto noise = testutil::make_wave(testutil::lcg_noise(16000, noise_seed));
  return dsp::mix_at_snr(clean, noise, snr_db).noisy;
}

}  // namespace

TEST_CASE("si_sdr matches a NumPy reference on fixed mixtures") {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  // Values frozen from an independent NumPy computation on the same signals.
  struct Case {
    double snr, expected;
  };
  const Case cases[] = {
      {-5.0, -5.002579592443},
      {0.0, -0.001450464145},
      {10.0, 9.999541431964},
  };
  for (const auto& c : cases)
    CHECK(metrics::si_sdr(clean, mixed(c.snr)) ==
          doctest::Approx(c.expected).epsilon(1e-9));

  // One-sample shift: frozen reference, much more sensitive to the formula.
  auto shifted = clean;
  for (size_t i = clean.size() - 1; i > 0; --i)
    shifted.samples[i] = clean.samples[i - 1];
  shifted.samples[0] = 0.0;
  CHECK(metrics::si_sdr(clean, shifted) ==
        doctest::Approx(17.068152667729).epsilon(1e-9));
}

TEST_CASE("si_sdr scale invariance and cap") {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  const auto noisy = mixed(-5.0);
  const double base = metrics::si_sdr(clean, noisy);
  for (double g : {0.1, 0.37, 3.0, 42.0}) {
    auto scaled = noisy;
    for (auto& s : scaled.samples) s *= g;
    CHECK(std::abs(metrics::si_sdr(clean, scaled) - base) <= 1e-6);
  }
  // A pure rescale of the reference is error-free up to the 1e-12 floor,
  // which the +/-60 dB cap turns into exactly 60.
  auto rescaled = clean;
  for (auto& s : rescaled.samples) s *= 0.37;
  CHECK(metrics::si_sdr(clean, rescaled) == 60.0);
}

TEST_CASE("si_sdr input validation") {
  const auto clean = testutil::make_wave(testutil::speechlike(1000));
  auto shorter = testutil::make_wave(testutil::speechlike(999));
  CHECK_THROWS_AS(metrics::si_sdr(clean, shorter), std::invalid_argument);
  auto zero = testutil::make_wave(std::vector<double>(1000, 0.0));
  CHECK_THROWS_AS(metrics::si_sdr(zero, clean), std::invalid_argument);
}

TEST_CASE("stoi: identity, frozen references, monotonicity") {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  CHECK(metrics::stoi(clean, clean) == doctest::Approx(1.0).epsilon(1e-6));

  // Frozen from an independent NumPy implementation of the same algorithm.
  // The reference uses scipy's polyphase resampler, ours a windowed-sinc
  // design, so agreement is expected at the 2e-2 level, not machine epsilon.
  struct Case {
    double snr, expected;
  };
  const Case cases[] = {
      {-10.0, 0.253630400896},
      {-5.0, 0.388352994945},
      {0.0, 0.511600520573},
      {10.0, 0.683808284992},
  };
  double prev = -1.0;
  for (const auto& c : cases) {
    const double v = metrics::stoi(clean, mixed(c.snr));
    CHECK(std::abs(v - c.expected) <= 0.02);
    CHECK(v > prev);  // strictly improves with SNR on this corpus
    prev = v;
  }
}

TEST_CASE("stoi input validation") {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  auto short_sig = testutil::make_wave(testutil::speechlike(4000));
  CHECK_THROWS_AS(metrics::stoi(short_sig, short_sig), std::invalid_argument);
  auto wrong_rate = clean;
  wrong_rate.sample_rate = 8000;
  CHECK_THROWS_AS(metrics::stoi(wrong_rate, wrong_rate), std::invalid_argument);
  auto mismatched = testutil::make_wave(testutil::speechlike(15999));
  CHECK_THROWS_AS(metrics::stoi(clean, mismatched), std::invalid_argument);
}

TEST_CASE("resample: 440 Hz tone survives 16k -> 10k") {
  std::vector<double> tone(16000);
  for (size_t i = 0; i < tone.size(); ++i)
    tone[i] = std::sin(2.0 * testutil::kPi * 440.0 * static_cast<double>(i) / 16000.0);
  const auto r = metrics::resample(tone, 16000, 10000);
  CHECK(r.size() == 10000);

  // Compare against the analytic tone at the new rate over the steady-state
  // interior (filter edge effects excluded), allowing for group delay by
  // scanning a small lag window.
  double best = -1.0;
  for (int lag = -4; lag <= 4; ++lag) {
    double dot = 0.0, rr = 0.0, tt = 0.0;
    for (int i = 1000; i < 9000; ++i) {
      const double ref =
          std::sin(2.0 * testutil::kPi * 440.0 * static_cast<double>(i + lag) / 10000.0);
      dot += r[static_cast<size_t>(i)] * ref;
      rr += r[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
      tt += ref * ref;
    }
    best = std::max(best, dot / std::sqrt(rr * tt));
  }
  CHECK(best >= 0.999);

  double peak = 0.0;
  for (int i = 1000; i < 9000; ++i) peak = std::max(peak, std::abs(r[static_cast<size_t>(i)]));
  CHECK(peak == doctest::Approx(1.0).epsilon(0.02));

  // Identity when the rates match.
  const auto same = metrics::resample(tone, 16000, 16000);
  CHECK(same == tone);
}

TEST_CASE("aggregate groups by (variant, mode, snr) and averages") {
  std::vector<metrics::MetricsRecord> recs;
  auto rec = [](const char* var, const char* mode, double snr, double sdr,
                double st) {
    metrics::MetricsRecord r;
    r.variant_id = var;
    r.corruption_mode = mode;
    r.snr_condition = snr;
    r.si_sdr_db = sdr;
    r.stoi = st;
    r.clip_id = "c";
    return r;
  };
  recs.push_back(rec("b", "none", -5.0, 2.0, 0.5));
  recs.push_back(rec("b", "none", -5.0, 4.0, 0.7));
  recs.push_back(rec("a", "none", 0.0, 1.0, 0.9));
  recs.push_back(rec("b", "mask", -5.0, -1.0, 0.2));
  const auto rows = metrics::aggregate(recs);
  REQUIRE(rows.size() == 3);
  // Ordered variant -> mode -> snr.
  CHECK(rows[0].variant_id == "a");
  CHECK(rows[1].variant_id == "b");
  CHECK(rows[1].corruption_mode == "mask");
  CHECK(rows[2].corruption_mode == "none");
  CHECK(rows[2].si_sdr_db == doctest::Approx(3.0));
  CHECK(rows[2].stoi == doctest::Approx(0.6));
  CHECK(rows[2].n_clips == 2);
  CHECK_THROWS_AS(metrics::aggregate({}), std::invalid_argument);
}

TEST_CASE("csv and table report the same numbers") {
  std::vector<metrics::ReportRow> rows(2);
  rows[0] = {"dual_full(face)", "none", -5.0, 3.14159, 0.654321, 50};
  rows[1] = {"aose", "none", 0.0, -2.5, 0.4, 50};
  const std::string csv = metrics::to_csv(rows);
  CHECK(csv.find("variant_id,corruption_mode,snr_db,si_sdr_db,stoi,n_clips\n") == 0);
  CHECK(csv.find("dual_full(face),none,-5,3.141590,0.654321,50\n") != std::string::npos);
  CHECK(csv.find("aose,none,0,-2.500000,0.400000,50\n") != std::string::npos);

  const std::string table = metrics::to_table(rows);
  CHECK(table.find("dual_full(face)") != std::string::npos);
  CHECK(table.find("3.142") != std::string::npos);   // %.3f rendering
  CHECK(table.find("0.6543") != std::string::npos);  // %.4f rendering
}

TEST_CASE("evaluate_clip carries condition tags through") {
  const auto clean = testutil::make_wave(testutil::speechlike(16000));
  const auto noisy = mixed(0.0);
  metrics::ConditionTags tags;
  tags.snr_db = 0.0;
  tags.variant_id = "dual_full(face)";
  tags.corruption_mode = "none";
  tags.clip_id = "test_0001";
  const auto r = metrics::evaluate_clip(clean, noisy, tags);
  CHECK(r.variant_id == tags.variant_id);
  CHECK(r.clip_id == tags.clip_id);
  CHECK(r.si_sdr_db == doctest::Approx(metrics::si_sdr(clean, noisy)));
  CHECK(r.stoi == doctest::Approx(metrics::stoi(clean, noisy)));
}
