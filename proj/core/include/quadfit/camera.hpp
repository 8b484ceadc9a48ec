#pragma once

#include "quadfit/types.hpp"

namespace quadfit {

// Perspective camera. The focal length is parameterized as f = f0 + f1 * x
// where x is a per-instance feature, and translation raw offsets map to the
// camera-frame translation as (1 + x, y, 1 + z + gamma_z0).
struct CameraParams {
  double f0 = 2700.0;
  double f1 = 2700.0;
  Vec2 pp = Vec2(128.0, 128.0);
  int width = 256;
  int height = 256;
  double gamma_z0 = 20.0;

  void validate() const;
  static CameraParams centered(double f0, double f1, int width, int height,
                               double gamma_z0 = 20.0);
};

// f = f0 + f1 * x. Throws if the result is not positive. Derivative w.r.t.
// the feature is f1.
double effective_focal(const CameraParams& cam, double focal_feature);

// (1 + x, y, 1 + z + gamma_z0). Throws if the effective depth is not positive.
Vec3 effective_translation(const Vec3& raw, double gamma_z0);
Vec3 raw_from_translation(const Vec3& gamma, double gamma_z0);

// (u, v) = f * (X/Z, Y/Z) + pp. Throws on non-positive depth.
Vec2 project_point(const Vec3& p_cam, double f, const Vec2& pp);

struct ProjectionJacobian {
  Eigen::Matrix<double, 2, 3> d_point;
  Vec2 d_f;
};
Vec2 project_point_with_jacobian(const Vec3& p_cam, double f, const Vec2& pp,
                                 ProjectionJacobian* jac);

Points2 project_points(const Points3& pts, double f, const Vec2& pp);

// Axis-aligned square crop (origin, side length in source pixels) resampled
// to out_size. Projection of any 3D point is preserved:
//   new_f  = f * (out_size / crop_size)
//   new_pp = (pp - origin) * (out_size / crop_size)
struct CropWindow {
  Vec2 origin = Vec2::Zero();
  double size = 0.0;
  int out_size = 0;
};
CameraParams apply_crop(const CameraParams& cam, const CropWindow& crop);
Vec2 crop_point(const Vec2& p, const CropWindow& crop);

}  // namespace quadfit
