#include "quadfit/camera.hpp"

#include <stdexcept>

namespace quadfit {

void CameraParams::validate() const {
  if (f0 <= 0) throw std::invalid_argument("camera: f0 must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
}

CameraParams CameraParams::centered(double f0, double f1, int width, int height,
                                    double gamma_z0) {
  CameraParams cam;
  cam.f0 = f0;
  cam.f1 = f1;
  cam.width = width;
  cam.height = height;
  cam.pp = Vec2(width / 2.0, height / 2.0);
  cam.gamma_z0 = gamma_z0;
  cam.validate();
  return cam;
}

double effective_focal(const CameraParams& cam, double focal_feature) {
  const double f = cam.f0 + cam.f1 * focal_feature;
  if (f <= 0) throw std::invalid_argument("effective_focal: non-positive focal length");
  return f;
}

Vec3 effective_translation(const Vec3& raw, double gamma_z0) {
  const Vec3 gamma(1.0 + raw.x(), raw.y(), 1.0 + raw.z() + gamma_z0);
  if (gamma.z() <= 0) throw std::invalid_argument("effective_translation: non-positive depth");
  return gamma;
}

Vec3 raw_from_translation(const Vec3& gamma, double gamma_z0) {
  return Vec3(gamma.x() - 1.0, gamma.y(), gamma.z() - 1.0 - gamma_z0);
}

Vec2 project_point(const Vec3& p, double f, const Vec2& pp) {
  if (p.z() <= 0) throw std::invalid_argument("project: non-positive depth");
  return Vec2(f * p.x() / p.z() + pp.x(), f * p.y() / p.z() + pp.y());
}

Vec2 project_point_with_jacobian(const Vec3& p, double f, const Vec2& pp,
                                 ProjectionJacobian* jac) {
  const Vec2 uv = project_point(p, f, pp);
  if (jac) {
    const double iz = 1.0 / p.z();
    jac->d_point << f * iz, 0, -f * p.x() * iz * iz,
                    0, f * iz, -f * p.y() * iz * iz;
    jac->d_f = Vec2(p.x() * iz, p.y() * iz);
  }
  return uv;
}

Points2 project_points(const Points3& pts, double f, const Vec2& pp) {
  Points2 out(pts.rows(), 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Vec2 uv = project_point(pts.row(i).transpose(), f, pp);
    out.row(i) = uv.transpose();
  }
  return out;
}

CameraParams apply_crop(const CameraParams& cam, const CropWindow& crop) {
  if (crop.size <= 0 || crop.out_size <= 0)
    throw std::invalid_argument("apply_crop: non-positive crop size");
  const double s = crop.out_size / crop.size;
  CameraParams out = cam;
  out.f0 = cam.f0 * s;
  out.f1 = cam.f1 * s;
  out.pp = (cam.pp - crop.origin) * s;
  out.width = crop.out_size;
  out.height = crop.out_size;
  return out;
}

Vec2 crop_point(const Vec2& p, const CropWindow& crop) {
  return (p - crop.origin) * (crop.out_size / crop.size);
}

}  // namespace quadfit
