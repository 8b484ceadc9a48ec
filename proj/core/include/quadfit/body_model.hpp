#pragma once

#include <array>
#include <string>
#include <vector>

#include "quadfit/types.hpp"

namespace quadfit {

constexpr int kJointCount = 35;
constexpr int kPoseDim = 3 * kJointCount;  // 105
constexpr int kLandmarkCount = 28;

// Rest mesh with a left/right mirror map across the x = 0 plane.
// symmetry_map is an involution; vertices on the plane map to themselves.
struct TemplateMesh {
  Points3 vertices;
  FaceMatrix faces;
  std::vector<int> symmetry_map;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
};

// Linear shape layer over the half mesh: dv_half = basis * features + bias.
// The full displacement field is produced by mirror reflection.
struct ShapeLayer {
  MatX basis;   // (3 * V_half, F)
  VecX bias;    // (3 * V_half)
  int feature_dim = 0;
};

struct Skeleton {
  Eigen::VectorXi parent;          // (J), -1 for the root
  SparseMat joint_regressor;       // (J, V), rows non-negative, sum to 1
  SparseMat skinning_weights;      // (V, J), rows non-negative, sum to 1
  Eigen::VectorXi mirror;          // (J) joint mirror table, involution

  int joint_count() const { return static_cast<int>(parent.size()); }
};

// Surface landmarks as barycentric points on faces.
struct LandmarkEmbedding {
  struct Entry {
    int face = 0;
    Vec3 weights = Vec3(1, 0, 0);
  };
  std::vector<Entry> entries;
};

struct BodyModel {
  TemplateMesh mesh;
  ShapeLayer shape;
  Skeleton skeleton;
  LandmarkEmbedding landmarks;

  // Optional texture parameterization (per face corner uv in [0,1]^2 and the
  // 4-rectangle atlas partition, in atlas pixels).
  Points2 uv;                        // (3 * F, 2); empty when absent
  std::vector<std::array<int, 4>> region_layout;  // {x, y, w, h} per region

  // Derived by finalize(): representative (x >= 0) vertex per mirror pair.
  std::vector<int> half_reps;
  Eigen::VectorXi full_to_half;      // full index -> half slot, or -1 on the mirrored side
  Eigen::VectorXi landmark_mirror;   // per-landmark mirror partner

  int vertex_count() const { return mesh.vertex_count(); }
  int half_vertex_count() const { return static_cast<int>(half_reps.size()); }
  int feature_dim() const { return shape.feature_dim; }
  bool has_uv() const { return uv.rows() == 3 * mesh.face_count(); }

  // Builds derived tables and checks every structural invariant; throws
  // std::invalid_argument with a description on the first violation.
  void finalize();
};

// Per-instance articulation state.
struct PoseState {
  VecX theta = VecX::Zero(kPoseDim);  // 35 Rodrigues vectors, flat
  Vec3 gamma = Vec3::Zero();          // camera-frame translation
  double focal_feature = 0.0;
  VecX shape_features;                // (F)
  VecX free_dv;                       // optional (3V) additive displacements; empty = off

  static PoseState rest(const BodyModel& model);
  // Wraps every joint rotation to norm <= pi.
  PoseState canonicalized() const;
};

// Expands a half-mesh displacement stack (3 * V_half) to the full mesh.
// Mirrored partners receive (-dx, dy, dz); on-plane vertices keep dx = 0.
Points3 reflect_half_displacements(const BodyModel& model, const VecX& half_dv);

// v_template + reflect(W * f_s + b) [+ free_dv].
Points3 shape_vertices(const BodyModel& model, const VecX& features);
Points3 shape_vertices(const BodyModel& model, const VecX& features, const VecX& free_dv);

// d(shaped vertices)/d(features), flattened rows (x0,y0,z0,x1,...): (3V, F).
// Constant in the features; depends only on the model.
MatX shape_vertex_jacobian(const BodyModel& model);

// World transform per joint: posed point = rot * (p - rest_joint) + origin.
struct JointTransforms {
  std::vector<Mat3> rot;     // world rotation per joint
  Points3 origin;            // posed joint location per joint
  Points3 rest_joints;       // regressed rest-pose joint locations
};

JointTransforms forward_kinematics(const BodyModel& model, const Points3& v_shape,
                                   const VecX& theta);

Points3 skin(const BodyModel& model, const Points3& v_shape,
             const JointTransforms& jt, const Vec3& gamma);

Points3 landmarks3d(const Points3& posed, const FaceMatrix& faces,
                    const LandmarkEmbedding& embedding);

struct PosedMesh {
  Points3 v_shape;
  JointTransforms transforms;
  Points3 vertices;
};
PosedMesh pose_mesh(const BodyModel& model, const PoseState& state);

// Analytic Jacobians of the posed vertex positions for a subset of vertices
// (empty subset = all). Rows are (x, y, z) per subset entry in order.
struct PoseJacobianRequest {
  bool theta = true;
  bool gamma = true;
  bool shape = true;
};
struct PoseJacobians {
  std::vector<int> vertex_subset;  // resolved subset (identity when empty input)
  MatX d_theta;  // (3K, 105)
  MatX d_gamma;  // (3K, 3)
  MatX d_shape;  // (3K, F)
};
PoseJacobians pose_jacobians(const BodyModel& model, const PoseState& state,
                             const std::vector<int>& vertex_subset,
                             const PoseJacobianRequest& req = {});

// Vertices referenced by the landmark embedding (sorted, unique).
std::vector<int> landmark_vertex_set(const BodyModel& model);

// Mirrors a flat pose across x = 0: joints permuted by the mirror table and
// each Rodrigues vector mapped to (rx, -ry, -rz).
VecX mirror_pose(const BodyModel& model, const VecX& theta);

void export_obj(const std::string& path, const Points3& vertices, const FaceMatrix& faces,
                const Points2* uv = nullptr);

}  // namespace quadfit
