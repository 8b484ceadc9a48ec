#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadfit/adam.hpp"
#include "quadfit/body_model.hpp"
#include "quadfit/camera.hpp"
#include "quadfit/objectives.hpp"
#include "quadfit/render.hpp"
#include "quadfit/synthgen.hpp"
#include "quadfit/texture.hpp"

namespace quadfit {

// One optimization stage: which variables move, which terms are active.
struct FitStage {
  std::string name;
  int iters = 100;
  double lr = 0.02;
  bool opt_pose = false;
  bool opt_trans = false;
  bool opt_focal = false;
  bool opt_shape = false;
  double w_kp2d = 10.0;
  double w_mask = 0.0;
  double w_pose_prior = 0.0;
  double w_shape_reg = 0.0;
  bool torso_only = false;  // restrict keypoints to torso_keypoints
};

struct RefineSettings {
  int iters = 120;
  double lr = 4e-3;
  double w_photo = 1.0;
  double w_cam = 1e-4;
  double w_trans = 1.0;
  bool opt_pose = true;
  bool opt_trans = true;
  bool opt_focal = true;
  bool opt_shape = true;
  bool opt_texture = false;
  double texture_lr = 5e-3;
  int photo_levels = 3;
  // Relative photometric decrease below this flags the result.
  double min_rel_improvement = 0.02;
};

struct FitConfig {
  uint64_t seed = 0;
  AdamParams adam;  // beta/eps defaults; per-stage lr overrides adam.lr
  std::vector<FitStage> stages;
  RefineSettings refine;
  std::vector<int> torso_keypoints = {0, 1, 2, 3, 4, 5, 6, 7};
  int render_size = 256;
  double sigma = 1.0;  // soft rasterizer width in pixels
  double min_depth = 0.5;
  double min_focal = 50.0;
  double prior_l2_weight = 1.0;  // fallback prior when no Gaussian is given

  static FitConfig defaults();
  void validate() const;
};

// Gaussian prior over the flat pose, 0.5 (t-mu)' P (t-mu) / dim.
struct PosePrior {
  VecX mean;
  MatX precision;

  static PosePrior from_gaussian(const PoseGaussian& g);
  static PosePrior l2(double scale = 1.0);  // zero-mean isotropic
  double evaluate(const VecX& theta, VecX* grad) const;
};

struct FitMetrics {
  double pck05 = 0, pck10 = 0, iou = 0;
  bool has_pck = false, has_iou = false;
};

struct FitResult {
  PoseState state;
  std::vector<std::vector<double>> stage_traces;
  std::vector<double> refine_trace;
  double final_loss = 0;
  double best_loss = 0;
  int best_iter = -1;
  double wall_seconds = 0;
  bool low_confidence = false;
  FitMetrics metrics;
};

// Inputs for one crop-frame fit. Keypoints are pixels in the crop frame.
struct FitInput {
  Points2 keypoints;
  std::vector<uint8_t> keypoint_visible;
  std::optional<Image> mask;
  CameraParams camera;
};

// Staged keypoint+silhouette fitting over {theta, gamma, focal feature,
// shape features}. Requires >= 6 visible keypoints. Deterministic given the
// config.
FitResult fit_supervised(const FitInput& input, const BodyModel& model, const FitConfig& config,
                         const PosePrior* prior = nullptr, const PoseState* init = nullptr);

// Photometric per-instance refinement against a background color model,
// anchored to the initial focal length and translation; retains the iterate
// with the lowest photometric loss.
FitResult refine_photometric(const Image& image, const PoseState& init, const TextureAtlas& atlas,
                             const Vec3& background, const BodyModel& model,
                             const CameraParams& camera, const FitConfig& config,
                             TextureAtlas* refined_atlas = nullptr);

// Average background color over the four image corner patches, excluding
// foreground pixels when a mask is given.
Vec3 estimate_background_color(const Image& image, const Image* mask = nullptr);

// Crop-frame inputs derived from one dataset sample.
struct SampleFitSetup {
  FitInput input;
  Image image_crop;
  Image mask_crop;      // binarized gt mask in the crop frame
  Image mask_full;      // dataset-resolution gt mask (for full-frame metrics)
  CropWindow crop;
  PoseState gt_state;   // in the crop camera
  CameraParams full_camera;
};
SampleFitSetup prepare_sample_fit(const AnnotationRecord& record, const std::string& dataset_dir,
                                  const BodyModel& model, int crop_size = 256,
                                  double margin = 0.15);

// Initial state perturbation for recovery experiments: pose noise, relative
// depth and focal jitter.
PoseState perturb_state(const PoseState& gt, double pose_sigma, double depth_frac,
                        double focal_frac, const CameraParams& cam, Rng& rng);

struct BatchOptions {
  int jobs = 1;
  double pose_sigma = 0.1;
  double depth_frac = 0.1;
  double focal_frac = 0.1;
  bool init_from_gt = true;
  bool use_mask = true;
  uint64_t seed = 0;
};

struct BatchRow {
  int id = -1;
  bool ok = false;
  std::string error;
  FitMetrics metrics;
  double final_loss = 0;
};

struct BatchResult {
  std::vector<BatchRow> rows;
  double mean_pck05 = 0, mean_pck10 = 0, mean_iou = 0;
  int n_ok = 0;
};

// Fits every sample of a dataset directory; per-sample failures are
// recorded and the batch continues.
BatchResult batch_fit(const std::string& dataset_dir, const BodyModel& model,
                      const FitConfig& config, const PosePrior* prior, const BatchOptions& options,
                      std::vector<FitResult>* results = nullptr,
                      std::vector<PoseState>* states = nullptr);

FitMetrics evaluate_fit(const BodyModel& model, const PoseState& state,
                        const CameraParams& camera, const Points2& gt_keypoints,
                        const std::vector<uint8_t>& gt_visible, const Image* gt_mask);

}  // namespace quadfit
