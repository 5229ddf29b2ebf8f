#ifndef FLUIDSFORMER_CONFIG_HPP_
#define FLUIDSFORMER_CONFIG_HPP_

#include "fluidsformer/losses.hpp"
#include "fluidsformer/model.hpp"
#include "fluidsformer/solver.hpp"
#include "fluidsformer/training.hpp"

#include <json.hpp>

#include <filesystem>

namespace fluidsformer {

// JSON mappings. Missing keys keep their defaults; unknown keys are
// rejected so that typos surface as errors.

nlohmann::json to_json(const SceneConfig &scene);
SceneConfig scene_from_json(const nlohmann::json &j);

nlohmann::json to_json(const ModelConfig &model);
ModelConfig model_from_json(const nlohmann::json &j);

nlohmann::json to_json(const TrainConfig &train);
TrainConfig train_from_json(const nlohmann::json &j);

nlohmann::json to_json(const LossConfig &loss);
LossConfig loss_from_json(const nlohmann::json &j);

nlohmann::json read_json(const std::filesystem::path &path);
void write_json(const std::filesystem::path &path, const nlohmann::json &j);

} // namespace fluidsformer

#endif // FLUIDSFORMER_CONFIG_HPP_
