#include "taltpp/checkpoint.hpp"

#include <cstdio>
#include <fstream>

namespace taltpp {

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

nlohmann::json vocab_json(const TppModel& model) {
  return {{"types", model.types().names()}, {"tokens", model.tokens().to_json()}};
}

nlohmann::json checkpoint_json(const TppModel& model, const CheckpointMeta& meta) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.params().all())
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"values", p->value.values()}});
  return {{"format", kCheckpointFormat},
          {"model", model.config().to_json()},
          {"model_hash", config_hash(model.config().to_json())},
          {"types", model.types().names()},
          {"delta_range", {model.delta_range().min, model.delta_range().max}},
          {"scaler", {{"scale", meta.scaler.scale}, {"offset", meta.scaler.offset}}},
          {"seed", meta.seed},
          {"run", meta.run},
          {"params", params}};
}

std::unique_ptr<TppModel> model_from_checkpoint(const nlohmann::json& ckpt, CheckpointMeta* meta) {
  if (!ckpt.is_object() || ckpt.value("format", std::string()) != kCheckpointFormat)
    throw ConfigError(std::string("checkpoint format tag mismatch (expected ") + kCheckpointFormat + ")");
  try {
    TypeVocab types;
    for (const auto& name : ckpt.at("types")) types.intern(name.get<std::string>());
    const DeltaRange range{ckpt.at("delta_range").at(0).get<double>(), ckpt.at("delta_range").at(1).get<double>()};
    const std::uint64_t seed = ckpt.at("seed").get<std::uint64_t>();
    auto model = std::make_unique<TppModel>(ModelConfig::from_json(ckpt.at("model")), types, range, seed);

    const auto& stored = ckpt.at("params");
    if (stored.size() != model->params().all().size()) throw ConfigError("checkpoint parameter count does not match model");
    for (const auto& p : stored) {
      ParamTensor* t = model->params().find(p.at("name").get<std::string>());
      if (!t) throw ConfigError("checkpoint has unknown parameter '" + p.at("name").get<std::string>() + "'");
      const std::size_t r = p.at("rows").get<std::size_t>(), c = p.at("cols").get<std::size_t>();
      if (r != t->value.rows() || c != t->value.cols())
        throw ConfigError("checkpoint parameter '" + t->name + "' has shape " + std::to_string(r) + "x" + std::to_string(c) +
                          ", model expects " + t->value.shape_str());
      t->value = Matrix(r, c, p.at("values").get<std::vector<double>>());
    }
    if (meta) {
      meta->scaler = {ckpt.at("scaler").at("scale").get<double>(), ckpt.at("scaler").at("offset").get<double>()};
      meta->seed = seed;
      meta->run = ckpt.value("run", nlohmann::json::object());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const TppModel& model, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(model, meta).dump() << '\n';
}

std::unique_ptr<TppModel> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return model_from_checkpoint(j, meta);
}

}  // namespace taltpp
