#include "config_json.hpp"

#include <fstream>

namespace quadfit {

using nlohmann::json;

namespace {

template <typename T>
void get_if(const json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

VecX vecx(const json& a) {
  VecX v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

json vecx_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  get_if(j, "count", &c.count);
  get_if(j, "subjects", &c.subjects);
  get_if(j, "pose_pool_size", &c.pose_pool_size);
  get_if(j, "fit_gaussian", &c.fit_gaussian);
  get_if(j, "gaussian_fraction", &c.gaussian_fraction);
  get_if(j, "per_joint_gaussian", &c.per_joint_gaussian);
  get_if(j, "pose_noise_sigma", &c.pose_noise_sigma);
  if (j.contains("gamma0")) {
    const auto& a = j.at("gamma0");
    c.gamma0 = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  }
  if (j.contains("trans_noise_sigma")) {
    const auto& a = j.at("trans_noise_sigma");
    c.trans_noise_sigma = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  }
  get_if(j, "shape_noise_sigma", &c.shape_noise_sigma);
  get_if(j, "shape_active_dims", &c.shape_active_dims);
  get_if(j, "f0", &c.f0);
  get_if(j, "focal_jitter_sigma", &c.focal_jitter_sigma);
  get_if(j, "brightness_jitter", &c.brightness_jitter);
  get_if(j, "hue_jitter", &c.hue_jitter);
  get_if(j, "saturation_jitter", &c.saturation_jitter);
  get_if(j, "background_dir", &c.background_dir);
  get_if(j, "image_size", &c.image_size);
  get_if(j, "seed", &c.seed);
  get_if(j, "covariance_ridge", &c.covariance_ridge);
  get_if(j, "white_balance_augment", &c.white_balance_augment);
  c.validate();
  return c;
}

json gen_config_to_json(const GenConfig& c) {
  return json{{"count", c.count},
              {"subjects", c.subjects},
              {"pose_pool_size", c.pose_pool_size},
              {"fit_gaussian", c.fit_gaussian},
              {"gaussian_fraction", c.gaussian_fraction},
              {"per_joint_gaussian", c.per_joint_gaussian},
              {"pose_noise_sigma", c.pose_noise_sigma},
              {"gamma0", {c.gamma0.x(), c.gamma0.y(), c.gamma0.z()}},
              {"trans_noise_sigma",
               {c.trans_noise_sigma.x(), c.trans_noise_sigma.y(), c.trans_noise_sigma.z()}},
              {"shape_noise_sigma", c.shape_noise_sigma},
              {"shape_active_dims", c.shape_active_dims},
              {"f0", c.f0},
              {"focal_jitter_sigma", c.focal_jitter_sigma},
              {"brightness_jitter", c.brightness_jitter},
              {"hue_jitter", c.hue_jitter},
              {"saturation_jitter", c.saturation_jitter},
              {"background_dir", c.background_dir},
              {"image_size", c.image_size},
              {"seed", c.seed},
              {"covariance_ridge", c.covariance_ridge},
              {"white_balance_augment", c.white_balance_augment}};
}

namespace {

FitStage stage_from_json(const json& j) {
  FitStage s;
  get_if(j, "name", &s.name);
  get_if(j, "iters", &s.iters);
  get_if(j, "lr", &s.lr);
  get_if(j, "opt_pose", &s.opt_pose);
  get_if(j, "opt_trans", &s.opt_trans);
  get_if(j, "opt_focal", &s.opt_focal);
  get_if(j, "opt_shape", &s.opt_shape);
  get_if(j, "kp2d", &s.w_kp2d);
  get_if(j, "mask", &s.w_mask);
  get_if(j, "pose_prior", &s.w_pose_prior);
  get_if(j, "shape_reg", &s.w_shape_reg);
  get_if(j, "torso_only", &s.torso_only);
  return s;
}

json stage_to_json(const FitStage& s) {
  return json{{"name", s.name},       {"iters", s.iters},
              {"lr", s.lr},           {"opt_pose", s.opt_pose},
              {"opt_trans", s.opt_trans}, {"opt_focal", s.opt_focal},
              {"opt_shape", s.opt_shape}, {"kp2d", s.w_kp2d},
              {"mask", s.w_mask},     {"pose_prior", s.w_pose_prior},
              {"shape_reg", s.w_shape_reg}, {"torso_only", s.torso_only}};
}

}  // namespace

FitConfig fit_config_from_json(const json& j) {
  FitConfig c = FitConfig::defaults();
  get_if(j, "seed", &c.seed);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    get_if(a, "lr", &c.adam.lr);
    get_if(a, "beta1", &c.adam.beta1);
    get_if(a, "beta2", &c.adam.beta2);
    get_if(a, "eps", &c.adam.eps);
  }
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& s : j.at("stages")) c.stages.push_back(stage_from_json(s));
  }
  if (j.contains("refine")) {
    const auto& r = j.at("refine");
    get_if(r, "iters", &c.refine.iters);
    get_if(r, "lr", &c.refine.lr);
    get_if(r, "photo", &c.refine.w_photo);
    get_if(r, "cam", &c.refine.w_cam);
    get_if(r, "trans", &c.refine.w_trans);
    get_if(r, "opt_pose", &c.refine.opt_pose);
    get_if(r, "opt_trans", &c.refine.opt_trans);
    get_if(r, "opt_focal", &c.refine.opt_focal);
    get_if(r, "opt_shape", &c.refine.opt_shape);
    get_if(r, "opt_texture", &c.refine.opt_texture);
    get_if(r, "texture_lr", &c.refine.texture_lr);
    get_if(r, "photo_levels", &c.refine.photo_levels);
    get_if(r, "min_rel_improvement", &c.refine.min_rel_improvement);
  }
  if (j.contains("torso_keypoints"))
    c.torso_keypoints = j.at("torso_keypoints").get<std::vector<int>>();
  get_if(j, "render_size", &c.render_size);
  get_if(j, "sigma", &c.sigma);
  get_if(j, "min_depth", &c.min_depth);
  get_if(j, "min_focal", &c.min_focal);
  get_if(j, "prior_l2_weight", &c.prior_l2_weight);
  c.validate();
  return c;
}

json fit_config_to_json(const FitConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back(stage_to_json(s));
  return json{
      {"seed", c.seed},
      {"adam",
       {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"stages", std::move(stages)},
      {"refine",
       {{"iters", c.refine.iters},
        {"lr", c.refine.lr},
        {"photo", c.refine.w_photo},
        {"cam", c.refine.w_cam},
        {"trans", c.refine.w_trans},
        {"opt_pose", c.refine.opt_pose},
        {"opt_trans", c.refine.opt_trans},
        {"opt_focal", c.refine.opt_focal},
        {"opt_shape", c.refine.opt_shape},
        {"opt_texture", c.refine.opt_texture},
        {"texture_lr", c.refine.texture_lr},
        {"photo_levels", c.refine.photo_levels},
        {"min_rel_improvement", c.refine.min_rel_improvement}}},
      {"torso_keypoints", c.torso_keypoints},
      {"render_size", c.render_size},
      {"sigma", c.sigma},
      {"min_depth", c.min_depth},
      {"min_focal", c.min_focal},
      {"prior_l2_weight", c.prior_l2_weight}};
}

BatchOptions batch_options_from_json(const json& j) {
  BatchOptions b;
  if (!j.contains("batch")) return b;
  const auto& a = j.at("batch");
  get_if(a, "jobs", &b.jobs);
  get_if(a, "pose_sigma", &b.pose_sigma);
  get_if(a, "depth_frac", &b.depth_frac);
  get_if(a, "focal_frac", &b.focal_frac);
  get_if(a, "init_from_gt", &b.init_from_gt);
  get_if(a, "use_mask", &b.use_mask);
  get_if(a, "seed", &b.seed);
  return b;
}

std::vector<VecX> load_pose_pool(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open pose pool " + path);
  json j;
  is >> j;
  std::vector<VecX> pool;
  for (const auto& p : j.at("poses")) pool.push_back(vecx(p));
  return pool;
}

void save_pose_pool(const std::string& path, const std::vector<VecX>& pool) {
  json poses = json::array();
  for (const auto& p : pool) poses.push_back(vecx_json(p));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write pose pool " + path);
  os << json{{"poses", std::move(poses)}}.dump() << '\n';
}

}  // namespace quadfit
