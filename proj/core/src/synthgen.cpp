#include "quadfit/synthgen.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>

#include "json_util.hpp"
#include "quadfit/png_io.hpp"

namespace quadfit {

namespace fs = std::filesystem;

void GenConfig::validate() const {
  if (count <= 0) throw std::invalid_argument("gen config: count must be positive");
  if (subjects <= 0) throw std::invalid_argument("gen config: subjects must be positive");
  if (pose_pool_size < 2) throw std::invalid_argument("gen config: pose pool too small");
  if (gaussian_fraction < 0 || gaussian_fraction > 1)
    throw std::invalid_argument("gen config: gaussian_fraction must be in [0,1]");
  if (pose_noise_sigma < 0) throw std::invalid_argument("gen config: pose_noise_sigma must be >= 0");
  if (trans_noise_sigma.minCoeff() < 0)
    throw std::invalid_argument("gen config: trans_noise_sigma must be >= 0");
  if (shape_noise_sigma < 0) throw std::invalid_argument("gen config: shape_noise_sigma must be >= 0");
  if (focal_jitter_sigma < 0) throw std::invalid_argument("gen config: focal_jitter_sigma must be >= 0");
  if (brightness_jitter < 0 || hue_jitter < 0 || saturation_jitter < 0)
    throw std::invalid_argument("gen config: jitter ranges must be >= 0");
  if (image_size < 32) throw std::invalid_argument("gen config: image_size too small");
  if (f0 <= 0) throw std::invalid_argument("gen config: f0 must be positive");
}

PoseGaussian fit_pose_gaussian(const std::vector<VecX>& pool, double ridge) {
  if (pool.size() < 2) throw std::invalid_argument("fit_pose_gaussian: need at least 2 poses");
  const Eigen::Index dim = pool[0].size();
  PoseGaussian out;
  out.mean = VecX::Zero(dim);
  for (const auto& p : pool) {
    if (p.size() != dim) throw std::invalid_argument("fit_pose_gaussian: ragged pool");
    out.mean += p;
  }
  out.mean /= static_cast<double>(pool.size());
  out.cov = MatX::Zero(dim, dim);
  for (const auto& p : pool) {
    const VecX d = p - out.mean;
    out.cov += d * d.transpose();
  }
  out.cov /= static_cast<double>(pool.size());
  out.cov.diagonal().array() += ridge;
  return out;
}

SceneSampler::SceneSampler(const GenConfig& config, std::vector<VecX> pose_pool, int feature_dim,
                           int background_count)
    : config_(config),
      pool_(std::move(pose_pool)),
      feature_dim_(feature_dim),
      background_count_(background_count) {
  const PoseGaussian g = fit_pose_gaussian(pool_, config.covariance_ridge);
  mean_ = g.mean;
  if (config.per_joint_gaussian) {
    // Block-diagonal factor: zero cross-joint correlations.
    chol_ = MatX::Zero(g.cov.rows(), g.cov.cols());
    for (int j = 0; j < kJointCount; ++j) {
      const Mat3 block = g.cov.block<3, 3>(3 * j, 3 * j);
      chol_.block<3, 3>(3 * j, 3 * j) = Eigen::LLT<Mat3>(block).matrixL();
    }
  } else {
    chol_ = Eigen::LLT<MatX>(g.cov).matrixL();
  }
}

SceneParams SceneSampler::sample(Rng& rng, int subject) const {
  SceneParams scene;
  scene.subject = subject;
  if (rng.uniform() < config_.gaussian_fraction) {
    VecX z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    scene.theta = mean_ + chol_ * z;
  } else {
    const int idx = rng.uniform_int(static_cast<int>(pool_.size()));
    scene.theta = pool_[idx];
    for (Eigen::Index i = 0; i < scene.theta.size(); ++i)
      scene.theta[i] += config_.pose_noise_sigma * rng.normal();
  }
  for (int a = 0; a < 3; ++a)
    scene.gamma[a] = config_.gamma0[a] + config_.trans_noise_sigma[a] * rng.normal();
  scene.focal = config_.f0 + config_.focal_jitter_sigma * rng.normal();
  scene.shape_features = VecX::Zero(feature_dim_);
  const int active = std::min(config_.shape_active_dims, feature_dim_);
  for (int i = 0; i < active; ++i)
    scene.shape_features[i] = config_.shape_noise_sigma * rng.normal();
  scene.brightness = 1.0 + rng.uniform(-config_.brightness_jitter, config_.brightness_jitter);
  scene.saturation = 1.0 + rng.uniform(-config_.saturation_jitter, config_.saturation_jitter);
  scene.hue = rng.uniform(-config_.hue_jitter, config_.hue_jitter);
  scene.background_seed = rng.next_u64();
  scene.background_index = background_count_ > 0 ? rng.uniform_int(background_count_) : -1;
  return scene;
}

GeneratedSample generate_sample(const BodyModel& model, const TextureAtlas& atlas,
                                const TexelMap& texel_map, const SceneParams& scene,
                                const Image& background, const GenConfig& config) {
  const int size = config.image_size;
  CameraParams cam = CameraParams::centered(config.f0, config.f0, size, size,
                                            config.gamma0.z());
  PoseState state;
  state.theta = scene.theta;
  state.gamma = scene.gamma;
  state.focal_feature = (scene.focal - cam.f0) / cam.f1;
  state.shape_features = scene.shape_features;

  const PosedMesh posed = pose_mesh(model, state);
  const double f = effective_focal(cam, state.focal_feature);
  const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, cam.pp);

  SoftRasterSettings soft;
  const SilhouetteRender sil = rasterize_silhouette(proj, size, size, soft);
  const TexturedRender tex = render_textured(model, proj, atlas, size, size);

  GeneratedSample out;
  out.mask = hard_mask(tex.hard);
  out.uvflow = compute_uvflow(model, texel_map, posed.vertices, tex.hard, f, cam.pp);

  Image frame = composite_over_image(tex.color, sil.coverage, background);
  frame = adjust_hsv(frame, scene.hue, scene.saturation, scene.brightness);
  out.image = std::move(frame);

  const Points3 lm3 = landmarks3d(posed.vertices, model.mesh.faces, model.landmarks);
  out.record.keypoints = project_points(lm3, f, cam.pp);
  out.record.keypoint_visible = landmark_visibility(lm3, out.record.keypoints, tex.hard);
  out.record.scene = scene;
  out.record.camera = cam;
  const VecX half = model.shape.basis * scene.shape_features + model.shape.bias;
  const Points3 dv = reflect_half_displacements(model, half);
  out.record.dv = VecX(3 * model.vertex_count());
  for (int v = 0; v < model.vertex_count(); ++v)
    out.record.dv.segment<3>(3 * v) = dv.row(v).transpose();
  return out;
}

Image make_procedural_background(int size, uint64_t seed) {
  Image bg(size, size, 3);
  // Low-frequency value noise over a vertical sky/ground gradient.
  auto noise_layer = [&](int grid, uint64_t salt) {
    Rng rng(Rng::mix(seed, salt));
    std::vector<float> cells(static_cast<size_t>(grid) * grid);
    for (auto& c : cells) c = static_cast<float>(rng.uniform());
    Image layer(grid, grid, 1);
    layer.data = cells;
    return resize_bilinear(layer, size, size);
  };
  const Image n1 = noise_layer(6, 11);
  const Image n2 = noise_layer(13, 23);
  const Image n3 = noise_layer(29, 37);
  Rng rng(Rng::mix(seed, 5));
  const Vec3 sky(0.62 + 0.2 * rng.uniform(), 0.70 + 0.15 * rng.uniform(), 0.78 + 0.1 * rng.uniform());
  const Vec3 ground(0.42 + 0.2 * rng.uniform(), 0.42 + 0.15 * rng.uniform(), 0.28 + 0.1 * rng.uniform());
  for (int y = 0; y < size; ++y) {
    const double t = static_cast<double>(y) / size;
    for (int x = 0; x < size; ++x) {
      const double n =
          0.5 * n1.at(x, y, 0) + 0.3 * n2.at(x, y, 0) + 0.2 * n3.at(x, y, 0) - 0.5;
      for (int c = 0; c < 3; ++c) {
        const double v = sky[c] + t * (ground[c] - sky[c]) + 0.25 * n;
        bg.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return bg;
}

Image white_balance_atlas(const Image& atlas, bool* warned) {
  if (atlas.channels != 3) throw std::invalid_argument("white_balance: expects RGB");
  if (warned) *warned = false;
  double mean[3] = {0, 0, 0};
  const size_t n = atlas.pixel_count();
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mean[c] += atlas.data[3 * i + c];
  for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);
  if (std::min({mean[0], mean[1], mean[2]}) < 1e-6) {
    if (warned) *warned = true;
    return atlas;
  }
  const double target = (mean[0] + mean[1] + mean[2]) / 3.0;
  Image out = atlas;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      out.data[3 * i + c] =
          std::clamp(static_cast<float>(atlas.data[3 * i + c] * (target / mean[c])), 0.f, 1.f);
  return out;
}

namespace {

json scene_to_json(const SceneParams& s) {
  return json{{"subject", s.subject},
              {"theta", to_json(s.theta)},
              {"gamma", to_json(s.gamma)},
              {"focal", s.focal},
              {"shape_features", to_json(s.shape_features)},
              {"brightness", s.brightness},
              {"saturation", s.saturation},
              {"hue", s.hue},
              {"background_seed", s.background_seed},
              {"background_index", s.background_index},
              {"mirrored", s.mirrored}};
}

SceneParams scene_from_json(const json& j) {
  SceneParams s;
  s.subject = j.at("subject").get<int>();
  s.theta = vecx_from_json(j.at("theta"));
  s.gamma = vec3_from_json(j.at("gamma"));
  s.focal = j.at("focal").get<double>();
  s.shape_features = vecx_from_json(j.at("shape_features"));
  s.brightness = j.at("brightness").get<double>();
  s.saturation = j.at("saturation").get<double>();
  s.hue = j.at("hue").get<double>();
  s.background_seed = j.at("background_seed").get<uint64_t>();
  s.background_index = j.at("background_index").get<int>();
  s.mirrored = j.at("mirrored").get<bool>();
  return s;
}

}  // namespace

void write_annotation(const std::string& path, const AnnotationRecord& record) {
  json j;
  j["id"] = record.id;
  j["image"] = record.image_path;
  j["mask"] = record.mask_path;
  j["atlas"] = record.atlas_path;
  j["uvflow"] = record.uvflow_path;
  j["scene"] = scene_to_json(record.scene);
  j["camera"] = json{{"f0", record.camera.f0},
                     {"f1", record.camera.f1},
                     {"pp", to_json(record.camera.pp)},
                     {"width", record.camera.width},
                     {"height", record.camera.height},
                     {"gamma_z0", record.camera.gamma_z0}};
  json kp = json::array();
  for (Eigen::Index i = 0; i < record.keypoints.rows(); ++i)
    kp.push_back(json::array({record.keypoints(i, 0), record.keypoints(i, 1),
                              record.keypoint_visible[i] ? 1 : 0}));
  j["keypoints"] = std::move(kp);
  j["dv"] = to_json(record.dv);
  save_json_file(path, j, -1);
}

AnnotationRecord read_annotation(const std::string& path) {
  const json j = load_json_file(path);
  AnnotationRecord r;
  r.id = j.at("id").get<int>();
  r.image_path = j.at("image").get<std::string>();
  r.mask_path = j.at("mask").get<std::string>();
  r.atlas_path = j.at("atlas").get<std::string>();
  r.uvflow_path = j.at("uvflow").get<std::string>();
  r.scene = scene_from_json(j.at("scene"));
  const auto& cam = j.at("camera");
  r.camera.f0 = cam.at("f0").get<double>();
  r.camera.f1 = cam.at("f1").get<double>();
  r.camera.pp = vec2_from_json(cam.at("pp"));
  r.camera.width = cam.at("width").get<int>();
  r.camera.height = cam.at("height").get<int>();
  r.camera.gamma_z0 = cam.at("gamma_z0").get<double>();
  const auto& kp = j.at("keypoints");
  r.keypoints.resize(static_cast<Eigen::Index>(kp.size()), 2);
  r.keypoint_visible.resize(kp.size());
  for (size_t i = 0; i < kp.size(); ++i) {
    r.keypoints(static_cast<Eigen::Index>(i), 0) = kp[i][0].get<double>();
    r.keypoints(static_cast<Eigen::Index>(i), 1) = kp[i][1].get<double>();
    r.keypoint_visible[i] = kp[i][2].get<int>() != 0;
  }
  r.dv = vecx_from_json(j.at("dv"));
  return r;
}

DatasetResult generate_dataset(const BodyModel& model,
                               const std::vector<TextureAtlas>& subject_atlases,
                               const std::vector<VecX>& pose_pool, const GenConfig& config,
                               const std::string& out_dir, int jobs) {
  config.validate();
  if (subject_atlases.size() < static_cast<size_t>(config.subjects))
    throw std::invalid_argument("generate_dataset: need one atlas per subject");
  for (const char* sub : {"images", "masks", "atlases", "uvflow", "annot"})
    fs::create_directories(fs::path(out_dir) / sub);

  std::vector<std::string> background_files;
  if (!config.background_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(config.background_dir))
      if (entry.path().extension() == ".png") background_files.push_back(entry.path().string());
    std::sort(background_files.begin(), background_files.end());
    if (background_files.empty())
      throw std::invalid_argument("generate_dataset: background directory has no .png files");
  }

  const TexelMap texel_map = build_texel_map(model, kAtlasSize);
  SceneSampler sampler(config, pose_pool, model.feature_dim(),
                       static_cast<int>(background_files.size()));

  // Subject atlases written once.
  std::vector<std::string> atlas_paths(config.subjects);
  for (int s = 0; s < config.subjects; ++s) {
    atlas_paths[s] = "atlases/subject_" + std::to_string(s) + ".png";
    write_png((fs::path(out_dir) / atlas_paths[s]).string(), subject_atlases[s].image);
  }

  // Scene parameters are drawn sequentially (deterministic order), then
  // samples render in parallel with per-sample streams already fixed.
  std::vector<SceneParams> scenes(config.count);
  for (int i = 0; i < config.count; ++i) {
    Rng rng(Rng::mix(config.seed, static_cast<uint64_t>(i)));
    scenes[i] = sampler.sample(rng, i % config.subjects);
  }

  std::vector<std::optional<AnnotationRecord>> records(config.count);
  std::vector<int> skipped;
  std::atomic<int> cursor{0};
  std::mutex skip_mutex;
  auto worker = [&]() {
    while (true) {
      const int i = cursor.fetch_add(1);
      if (i >= config.count) break;
      char name[32];
      std::snprintf(name, sizeof(name), "%06d", i);
      try {
        Image background =
            scenes[i].background_index >= 0
                ? resize_bilinear(read_png(background_files[scenes[i].background_index]),
                                  config.image_size, config.image_size)
                : make_procedural_background(config.image_size, scenes[i].background_seed);
        GeneratedSample sample = generate_sample(model, subject_atlases[scenes[i].subject],
                                                 texel_map, scenes[i], background, config);
        sample.record.id = i;
        sample.record.image_path = std::string("images/") + name + ".png";
        sample.record.mask_path = std::string("masks/") + name + ".png";
        sample.record.uvflow_path = std::string("uvflow/") + name + ".uvf";
        sample.record.atlas_path = atlas_paths[scenes[i].subject];
        write_png((fs::path(out_dir) / sample.record.image_path).string(), sample.image);
        write_png((fs::path(out_dir) / sample.record.mask_path).string(), sample.mask);
        write_uvflow((fs::path(out_dir) / sample.record.uvflow_path).string(), sample.uvflow);
        write_annotation((fs::path(out_dir) / "annot" / (std::string(name) + ".json")).string(),
                         sample.record);
        records[i] = std::move(sample.record);
      } catch (const std::exception&) {
        std::lock_guard<std::mutex> lock(skip_mutex);
        skipped.push_back(i);
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::sort(skipped.begin(), skipped.end());

  DatasetResult out;
  json manifest;
  manifest["seed"] = config.seed;
  manifest["count"] = config.count;
  manifest["subjects"] = config.subjects;
  manifest["image_size"] = config.image_size;
  manifest["skipped"] = skipped;
  json samples = json::array();
  for (int i = 0; i < config.count; ++i) {
    if (!records[i]) continue;
    const auto& r = *records[i];
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", i);
    samples.push_back(json{{"id", r.id},
                           {"image", r.image_path},
                           {"mask", r.mask_path},
                           {"annot", std::string("annot/") + name + ".json"},
                           {"uvflow", r.uvflow_path},
                           {"atlas", r.atlas_path},
                           {"subject", r.scene.subject}});
    out.records.push_back(r);
  }
  manifest["samples"] = std::move(samples);
  out.skipped = skipped;
  out.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_json_file(out.manifest_path, manifest);
  return out;
}

std::vector<std::string> list_dataset_annotations(const std::string& dataset_dir) {
  std::vector<std::string> out;
  const fs::path annot = fs::path(dataset_dir) / "annot";
  if (!fs::exists(annot)) return out;
  for (const auto& entry : fs::directory_iterator(annot))
    if (entry.path().extension() == ".json") out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace quadfit
