#pragma once

// An encoder on disk is a directory holding `encoder.bundle` (numcore bundle
// format) and `encoder.json`, the manifest. The manifest's "spec" object is
// enough to rebuild the architecture; everything else (training settings,
// metrics, cohort provenance, normalization) is carried through untouched.

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "seqstate/encoders/model.hpp"
#include "seqstate/encoders/train.hpp"

namespace seqstate::encoders {

nlohmann::json spec_to_json(const EncoderSpec& spec);
EncoderSpec spec_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

// Writes both files atomically. `extra` keys are merged into the manifest.
void save_encoder(const EncoderModel& model, const std::filesystem::path& dir, const nlohmann::json& extra = {});

struct LoadedEncoder {
  std::unique_ptr<EncoderModel> model;
  nlohmann::json manifest;
};

// DataError when files are missing, malformed, or disagree with each other.
LoadedEncoder load_encoder(const std::filesystem::path& dir);

}  // namespace seqstate::encoders
