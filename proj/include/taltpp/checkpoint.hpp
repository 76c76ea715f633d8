#pragma once

// Versioned model checkpoints. A checkpoint is one JSON document holding the
// model config, type vocabulary, fitted time scaler and gap range, the init
// seed, and every parameter by name with its shape.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "taltpp/event_data.hpp"
#include "taltpp/model.hpp"

namespace taltpp {

inline constexpr const char* kCheckpointFormat = "taltpp-ckpt-v1";

struct CheckpointMeta {
  TimeScaler scaler;
  std::uint64_t seed = 0;
  nlohmann::json run = nlohmann::json::object();  // free-form provenance (config, hash)
};

// Hex FNV-1a of the compact JSON dump; object keys are sorted so equal
// configs hash equally.
std::string config_hash(const nlohmann::json& config);

nlohmann::json checkpoint_json(const TppModel& model, const CheckpointMeta& meta);
std::unique_ptr<TppModel> model_from_checkpoint(const nlohmann::json& ckpt, CheckpointMeta* meta = nullptr);

void save_checkpoint(const std::filesystem::path& path, const TppModel& model, const CheckpointMeta& meta);
std::unique_ptr<TppModel> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

nlohmann::json vocab_json(const TppModel& model);

}  // namespace taltpp
