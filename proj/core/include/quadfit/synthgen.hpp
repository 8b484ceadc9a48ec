#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadfit/body_model.hpp"
#include "quadfit/camera.hpp"
#include "quadfit/image.hpp"
#include "quadfit/render.hpp"
#include "quadfit/rng.hpp"
#include "quadfit/texture.hpp"

namespace quadfit {

struct GenConfig {
  int count = 50;            // total images
  int subjects = 1;          // distinct toy subjects (atlas/shape variants)
  int pose_pool_size = 57;
  bool fit_gaussian = true;
  double gaussian_fraction = 0.778;  // rest are noised pool poses
  bool per_joint_gaussian = false;   // block-diagonal sampler instead of full
  double pose_noise_sigma = 0.1;
  Vec3 gamma0 = Vec3(0.5, -0.1, 20.0);
  Vec3 trans_noise_sigma = Vec3(0.05, 0.05, 1.0);
  double shape_noise_sigma = 0.2;
  int shape_active_dims = 20;
  double f0 = 4000.0;
  double focal_jitter_sigma = 150.0;
  double brightness_jitter = 0.08;
  double hue_jitter = 0.03;
  double saturation_jitter = 0.08;
  std::string background_dir;  // empty -> procedural backgrounds
  int image_size = 640;
  uint64_t seed = 0;
  double covariance_ridge = 1e-4;
  bool white_balance_augment = false;

  void validate() const;
};

// Sample mean and ridge-regularized covariance over flat 105-dim poses.
struct PoseGaussian {
  VecX mean;
  MatX cov;
};
PoseGaussian fit_pose_gaussian(const std::vector<VecX>& pool, double ridge = 1e-4);

struct SceneParams {
  int subject = 0;
  VecX theta;
  Vec3 gamma = Vec3::Zero();
  double focal = 4000.0;
  VecX shape_features;
  double brightness = 1.0, saturation = 1.0, hue = 0.0;
  uint64_t background_seed = 0;
  int background_index = -1;  // index into background_dir listing, -1 = procedural
  bool mirrored = false;
};

// Deterministic scene sampling: a mix of Gaussian-sampled poses and noised
// pool poses, translation/shape/focal/appearance jitter.
class SceneSampler {
 public:
  SceneSampler(const GenConfig& config, std::vector<VecX> pose_pool, int feature_dim,
               int background_count = 0);
  SceneParams sample(Rng& rng, int subject) const;

 private:
  GenConfig config_;
  std::vector<VecX> pool_;
  int feature_dim_;
  int background_count_;
  VecX mean_;
  MatX chol_;  // lower-triangular factor of the (ridged) covariance
};

struct AnnotationRecord {
  int id = 0;
  std::string image_path, mask_path, atlas_path, uvflow_path;
  SceneParams scene;
  CameraParams camera;
  Points2 keypoints;
  std::vector<uint8_t> keypoint_visible;
  VecX dv;  // ground-truth displacement field, flattened (3V)
};

struct GeneratedSample {
  AnnotationRecord record;
  Image image;   // composited + jittered frame
  Image mask;    // hard silhouette
  UVFlow uvflow;
};

// Renders one scene over the given background and assembles its annotations.
// Throws on degenerate scenes (non-positive depth).
GeneratedSample generate_sample(const BodyModel& model, const TextureAtlas& atlas,
                                const TexelMap& texel_map, const SceneParams& scene,
                                const Image& background, const GenConfig& config);

Image make_procedural_background(int size, uint64_t seed);

// Gray-world white balance: channel means equalized, values clamped to
// [0,1]. Near-black input is returned unchanged with *warned set.
Image white_balance_atlas(const Image& atlas, bool* warned = nullptr);

void write_annotation(const std::string& path, const AnnotationRecord& record);
AnnotationRecord read_annotation(const std::string& path);

struct DatasetResult {
  std::vector<AnnotationRecord> records;
  std::vector<int> skipped;  // sample ids that failed to render
  std::string manifest_path;
};

// Writes dataset/{images,masks,atlases,uvflow,annot}/NNNNNN.* plus
// manifest.json. Deterministic for a fixed config+seed regardless of jobs.
DatasetResult generate_dataset(const BodyModel& model,
                               const std::vector<TextureAtlas>& subject_atlases,
                               const std::vector<VecX>& pose_pool, const GenConfig& config,
                               const std::string& out_dir, int jobs = 1);

std::vector<std::string> list_dataset_annotations(const std::string& dataset_dir);

}  // namespace quadfit
