#pragma once

#include <filesystem>
#include <string>

#include "dhfd/autoencoder.hpp"
#include "dhfd/scoring.hpp"

namespace dhfd {

// On-disk model bundle directory:
//   model.json         architecture, AE config, seed, cache key
//   weights.bin        AEModel::parameters() as little-endian float64
//   preprocessor.json  kept features, means, stds, conditioning, dropped
//   scoring.json       score type, t_AE, lambda, RE mean, covariance inverse
//                      (row-major little-endian float64, base64)
struct ModelBundle {
  AEModel model;
  ScoreModel score;
  std::string cache_key;
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

std::string preprocessor_to_json(const PreprocessorState& state);
PreprocessorState preprocessor_from_json(const std::string& text);

std::string score_model_to_json(const ScoreModel& score);
ScoreModel score_model_from_json(const std::string& text);

std::string ae_config_to_json(const AEConfig& config);
AEConfig ae_config_from_json(const std::string& text);

std::string train_report_to_json(const TrainReport& report);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// 64-bit FNV-1a, hex encoded; used for bundle cache keys.
std::string fnv1a_hex(const std::string& text);

}  // namespace dhfd
