#pragma once

#include <optional>
#include <vector>

#include "quadfit/body_model.hpp"
#include "quadfit/image.hpp"
#include "quadfit/texture.hpp"

namespace quadfit {

// One non-negative weight per objective term.
struct LossWeights {
  double mask = 1.0;
  double kp2d = 10.0;
  double cam = 1e-4;
  double img = 1.0;
  double pose = 1.0;
  double trans = 1.0;
  double shape = 1.0;
  double uv = 1.0;
  double tex = 1.0;
  double dt = 0.1;
  double photo = 1.0;

  void validate() const;
};

// Optional per-sample supervision. Present fields are dimension-checked
// against the model by the fitter.
struct GroundTruth {
  std::optional<Image> silhouette;
  std::optional<Points2> keypoints;
  std::vector<uint8_t> keypoint_visible;
  std::optional<VecX> theta;
  std::optional<Vec3> gamma;
  std::optional<double> focal;
  std::optional<VecX> dv;            // flattened (3V)
  std::optional<Image> texture;
  std::optional<UVFlow> uvflow;
};

// Mean absolute difference; optional gradient w.r.t. the prediction.
double mask_loss(const Image& gt, const Image& pred, Image* grad_pred = nullptr);

// Mean squared distance over visible points; expects coordinates already
// normalized by the crop size. Throws if no point is visible.
double keypoint_loss(const Points2& gt, const Points2& pred,
                     const std::vector<uint8_t>& visible, Points2* grad_pred = nullptr);

// Mean geodesic angle between per-joint rotations; `squared` averages the
// squared angles instead. Gradient is w.r.t. the predicted flat pose.
double pose_geodesic_loss(const VecX& theta_gt, const VecX& theta, bool squared = false,
                          VecX* grad = nullptr);

// Mean absolute pixel difference; levels > 1 averages L1 over that many
// dyadic scales (2x2 box pyramid). Optional foreground mask restricts the
// comparison (applied at full resolution by masking both inputs).
double photometric_loss(const Image& target, const Image& pred, int levels = 1,
                        Image* grad_pred = nullptr, const Image* mask = nullptr);

double uv_loss(const UVFlow& gt, const UVFlow& pred);
double tex_loss(const Image& gt, const Image& pred);

// Mean, over visible textels, of the distance-transform value of the
// ground-truth mask at the sampled image location, normalized by crop size.
// `dt_image` must be distance_transform(S_gt) in pixels.
double dt_loss(const UVFlow& pred, const Image& dt_image, double crop_size);

double cam_loss(double f_ref, double f);
double trans_loss(const Vec3& ref, const Vec3& t);
double shape_loss(const VecX& dv_ref, const VecX& dv);

// Fraction of visible keypoints within tau * bbox_size of ground truth.
double pck(const Points2& gt, const Points2& pred, const std::vector<uint8_t>& visible,
           double bbox_size, double tau);

// Intersection-over-union of masks binarized at 0.5. An empty union yields 0
// and sets *empty_union when provided.
double iou(const Image& a, const Image& b, bool* empty_union = nullptr);

// Max side of the tight bounding box of mask pixels > 0.5 (0 if empty).
double mask_bbox_max_side(const Image& mask);
// Tight bbox as (x0, y0, x1, y1) half-open pixel bounds; false if empty.
bool mask_bbox(const Image& mask, double* x0, double* y0, double* x1, double* y1);

}  // namespace quadfit
