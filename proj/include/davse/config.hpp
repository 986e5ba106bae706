#pragma once

#include <cstdint>
#include <string>

#include "davse/datagen.hpp"
#include "davse/dsp.hpp"
#include "davse/harness.hpp"
#include "davse/model.hpp"
#include "json.hpp"

namespace davse::config {

// Single JSON document covering every module's knobs. Unknown keys are
// rejected with the offending key named; flags override file values.
struct RunConfig {
  dsp::StftConfig stft;
  model::ModelConfig model;
  harness::TrainSchedule train;
  datagen::CorpusSpec corpus;
};

RunConfig defaults();

// Overlays a parsed JSON document onto rc; throws std::invalid_argument
// naming any key that is not part of the schema.
void apply_json(RunConfig& rc, const nlohmann::json& j);

// defaults() overlaid with the file's contents.
RunConfig load_file(const std::string& path);

nlohmann::ordered_json to_json(const RunConfig& rc);

// Propagates one seed into every seeded module (corpus + training).
void set_seed(RunConfig& rc, uint64_t seed);

// Writes the effective config JSON for provenance.
void write_effective(const RunConfig& rc, const std::string& path);

}  // namespace davse::config
