#pragma once

#include "quadfit/types.hpp"

namespace quadfit {

// Axis-angle (Rodrigues) rotations. The vector's direction is the rotation
// axis and its norm the angle in radians.

Mat3 rodrigues_to_matrix(const Vec3& r);

// Jacobian layout: column k holds dR/dr_k flattened column-major, i.e.
// entry (i + 3*j, k) is dR(i,j)/dr_k.
struct RotationWithJacobian {
  Mat3 R;
  Eigen::Matrix<double, 9, 3> dR;
};
RotationWithJacobian rodrigues_to_matrix_with_jacobian(const Vec3& r);

// Log map. Returns a vector with norm in [0, pi].
Vec3 matrix_to_rodrigues(const Mat3& R);

// Wraps the angle so the returned vector has norm <= pi.
Vec3 canonicalize_rodrigues(const Vec3& r);

// Angle of the relative rotation between two rotation matrices, in [0, pi].
double geodesic_angle(const Mat3& a, const Mat3& b);

}  // namespace quadfit
