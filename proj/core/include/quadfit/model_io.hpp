#pragma once

#include <string>

#include "quadfit/body_model.hpp"
#include "quadfit/camera.hpp"

namespace quadfit {

// Model file: one JSON document with fields {vertices, faces, symmetry_map,
// W, b, parent, joint_regressor (sparse triplets), skinning_weights (sparse
// triplets), landmark_embedding, joint_mirror_table} plus optional {uv,
// region_layout}. Arrays are nested number lists.
BodyModel load_model(const std::string& path);
void save_model(const std::string& path, const BodyModel& model);

// Pose/camera state of one instance: {theta, gamma, focal_feature,
// shape_features, free_dv?, camera}.
struct ParamsFile {
  PoseState state;
  CameraParams camera;
};
ParamsFile load_params(const std::string& path);
void save_params(const std::string& path, const ParamsFile& params);

CameraParams camera_from_json_file(const std::string& path);

}  // namespace quadfit
