#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "quadfit/fitter.hpp"
#include "quadfit/synthgen.hpp"

namespace quadfit {

GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::json gen_config_to_json(const GenConfig& c);

FitConfig fit_config_from_json(const nlohmann::json& j);
nlohmann::json fit_config_to_json(const FitConfig& c);

BatchOptions batch_options_from_json(const nlohmann::json& j);

// Pose pool file: {"poses": [[105 numbers], ...]}.
std::vector<VecX> load_pose_pool(const std::string& path);
void save_pose_pool(const std::string& path, const std::vector<VecX>& pool);

}  // namespace quadfit
