#include "quadfit/model_io.hpp"

#include "json_util.hpp"

namespace quadfit {

BodyModel load_model(const std::string& path) {
  const json j = load_json_file(path);
  BodyModel m;
  m.mesh.vertices = matrix_from_json<Points3>(j.at("vertices"));
  m.mesh.faces = matrix_from_json<FaceMatrix>(j.at("faces"));
  m.mesh.symmetry_map = j.at("symmetry_map").get<std::vector<int>>();
  m.shape.basis = matrix_from_json<MatX>(j.at("W"));
  m.shape.bias = vecx_from_json(j.at("b"));
  m.shape.feature_dim = static_cast<int>(m.shape.basis.cols());
  const auto parent = j.at("parent").get<std::vector<int>>();
  m.skeleton.parent = Eigen::Map<const Eigen::VectorXi>(parent.data(), parent.size());
  m.skeleton.joint_regressor = sparse_from_json(j.at("joint_regressor"));
  m.skeleton.skinning_weights = sparse_from_json(j.at("skinning_weights"));
  const auto mirror = j.at("joint_mirror_table").get<std::vector<int>>();
  m.skeleton.mirror = Eigen::Map<const Eigen::VectorXi>(mirror.data(), mirror.size());
  for (const auto& e : j.at("landmark_embedding")) {
    LandmarkEmbedding::Entry entry;
    entry.face = e[0].get<int>();
    entry.weights = Vec3(e[1].get<double>(), e[2].get<double>(), e[3].get<double>());
    m.landmarks.entries.push_back(entry);
  }
  if (j.contains("uv")) {
    m.uv = matrix_from_json<Points2>(j.at("uv"));
    for (const auto& r : j.at("region_layout")) {
      m.region_layout.push_back(
          {r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
    }
  }
  m.finalize();
  return m;
}

void save_model(const std::string& path, const BodyModel& model) {
  json j;
  j["vertices"] = matrix_to_json(model.mesh.vertices);
  j["faces"] = matrix_to_json(model.mesh.faces);
  j["symmetry_map"] = model.mesh.symmetry_map;
  j["W"] = matrix_to_json(model.shape.basis);
  j["b"] = to_json(model.shape.bias);
  j["parent"] = std::vector<int>(model.skeleton.parent.data(),
                                 model.skeleton.parent.data() + model.skeleton.parent.size());
  j["joint_regressor"] = sparse_to_json(model.skeleton.joint_regressor);
  j["skinning_weights"] = sparse_to_json(model.skeleton.skinning_weights);
  j["joint_mirror_table"] = std::vector<int>(
      model.skeleton.mirror.data(), model.skeleton.mirror.data() + model.skeleton.mirror.size());
  json lm = json::array();
  for (const auto& e : model.landmarks.entries)
    lm.push_back(json::array({e.face, e.weights.x(), e.weights.y(), e.weights.z()}));
  j["landmark_embedding"] = std::move(lm);
  if (model.has_uv()) {
    j["uv"] = matrix_to_json(model.uv);
    json regions = json::array();
    for (const auto& r : model.region_layout)
      regions.push_back(json::array({r[0], r[1], r[2], r[3]}));
    j["region_layout"] = std::move(regions);
  }
  save_json_file(path, j, -1);
}

namespace {

CameraParams camera_from_json(const json& j) {
  CameraParams cam;
  cam.f0 = j.at("f0").get<double>();
  cam.f1 = j.at("f1").get<double>();
  cam.pp = vec2_from_json(j.at("pp"));
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  if (j.contains("gamma_z0")) cam.gamma_z0 = j.at("gamma_z0").get<double>();
  cam.validate();
  return cam;
}

json camera_to_json(const CameraParams& cam) {
  return json{{"f0", cam.f0},     {"f1", cam.f1},         {"pp", to_json(cam.pp)},
              {"width", cam.width}, {"height", cam.height}, {"gamma_z0", cam.gamma_z0}};
}

}  // namespace

ParamsFile load_params(const std::string& path) {
  const json j = load_json_file(path);
  ParamsFile out;
  out.state.theta = vecx_from_json(j.at("theta"));
  out.state.gamma = vec3_from_json(j.at("gamma"));
  out.state.focal_feature = j.at("focal_feature").get<double>();
  out.state.shape_features = vecx_from_json(j.at("shape_features"));
  if (j.contains("free_dv")) out.state.free_dv = vecx_from_json(j.at("free_dv"));
  out.camera = camera_from_json(j.at("camera"));
  return out;
}

void save_params(const std::string& path, const ParamsFile& params) {
  json j;
  j["theta"] = to_json(params.state.theta);
  j["gamma"] = to_json(params.state.gamma);
  j["focal_feature"] = params.state.focal_feature;
  j["shape_features"] = to_json(params.state.shape_features);
  if (params.state.free_dv.size() > 0) j["free_dv"] = to_json(params.state.free_dv);
  j["camera"] = camera_to_json(params.camera);
  save_json_file(path, j);
}

CameraParams camera_from_json_file(const std::string& path) {
  return camera_from_json(load_json_file(path));
}

}  // namespace quadfit
