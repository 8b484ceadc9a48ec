#include "quadfit/rotation.hpp"

#include <cmath>

namespace quadfit {

namespace {

// Gradients stay stable through the identity when the closed form is
// replaced by its series below this angle.
constexpr double kSmallAngle = 1e-8;

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

Mat3 rodrigues_to_matrix(const Vec3& r) {
  const double angle = r.norm();
  const Mat3 K = skew(r);
  if (angle < kSmallAngle) {
    const double a2 = angle * angle;
    // sin(t)/t and (1-cos(t))/t^2 to second order.
    const double c1 = 1.0 - a2 / 6.0;
    const double c2 = 0.5 - a2 / 24.0;
    return Mat3::Identity() + c1 * K + c2 * K * K;
  }
  const double c1 = std::sin(angle) / angle;
  const double c2 = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + c1 * K + c2 * K * K;
}

RotationWithJacobian rodrigues_to_matrix_with_jacobian(const Vec3& r) {
  RotationWithJacobian out;
  out.R = rodrigues_to_matrix(r);
  const double angle2 = r.squaredNorm();
  if (angle2 < kSmallAngle * kSmallAngle) {
    // d/dr_k [I + [r]x + 0.5 [r]x^2] with [r]x^2 = r r^T - |r|^2 I.
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e(k) = 1.0;
      Mat3 d = skew(e);
      d += 0.5 * (e * r.transpose() + r * e.transpose() - 2.0 * r(k) * Mat3::Identity());
      out.dR.col(k) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(Mat3(d).data());
    }
    return out;
  }
  // Gallego & Yezzi: dR/dr_k = (r_k [r]x + [r x (I - R) e_k]x) / |r|^2 * R.
  const Mat3 K = skew(r);
  const Mat3 ImR = Mat3::Identity() - out.R;
  for (int k = 0; k < 3; ++k) {
    const Vec3 col = ImR.col(k);
    const Mat3 d = ((r(k) * K + skew(r.cross(col))) / angle2) * out.R;
    out.dR.col(k) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data());
  }
  return out;
}

Vec3 matrix_to_rodrigues(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  Vec3 r = aa.angle() * aa.axis();
  return canonicalize_rodrigues(r);
}

Vec3 canonicalize_rodrigues(const Vec3& r) {
  const double angle = r.norm();
  if (angle <= M_PI) return r;
  double wrapped = std::fmod(angle + M_PI, 2.0 * M_PI) - M_PI;
  return r * (wrapped / angle);
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
  const double tr = (a * b.transpose()).trace();
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace quadfit
