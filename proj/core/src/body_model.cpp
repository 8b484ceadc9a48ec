#include "quadfit/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "quadfit/rotation.hpp"

namespace quadfit {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument("body model: " + what);
}

// Topological order with parents before children.
std::vector<int> joint_order(const Eigen::VectorXi& parent) {
  const int n = static_cast<int>(parent.size());
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> placed(n, 0);
  while (static_cast<int>(order.size()) < n) {
    bool progress = false;
    for (int j = 0; j < n; ++j) {
      if (placed[j]) continue;
      if (parent[j] < 0 || placed[parent[j]]) {
        order.push_back(j);
        placed[j] = 1;
        progress = true;
      }
    }
    if (!progress) throw std::invalid_argument("body model: parent table has a cycle");
  }
  return order;
}

}  // namespace

void BodyModel::finalize() {
  const int V = mesh.vertex_count();
  const int F = mesh.face_count();
  require(V > 0 && F > 0, "empty mesh");
  for (int f = 0; f < F; ++f) {
    const auto row = mesh.faces.row(f);
    for (int c = 0; c < 3; ++c) require(row[c] >= 0 && row[c] < V, "face index out of range");
    require(row[0] != row[1] && row[1] != row[2] && row[0] != row[2], "degenerate face");
  }

  require(static_cast<int>(mesh.symmetry_map.size()) == V, "symmetry_map size mismatch");
  for (int v = 0; v < V; ++v) {
    const int m = mesh.symmetry_map[v];
    require(m >= 0 && m < V, "symmetry_map index out of range");
    require(mesh.symmetry_map[m] == v, "symmetry_map is not an involution");
    const Vec3 mirrored(-mesh.vertices(v, 0), mesh.vertices(v, 1), mesh.vertices(v, 2));
    require((mirrored.transpose() - mesh.vertices.row(m)).norm() < 1e-6,
            "mirrored vertices do not reproduce the vertex set");
  }

  // Representative = on-plane vertex, or the x > 0 side of a pair.
  half_reps.clear();
  full_to_half = Eigen::VectorXi::Constant(V, -1);
  for (int v = 0; v < V; ++v) {
    const int m = mesh.symmetry_map[v];
    const bool rep = (m == v) || (mesh.vertices(v, 0) > mesh.vertices(m, 0)) ||
                     (mesh.vertices(v, 0) == mesh.vertices(m, 0) && v < m);
    if (rep) half_reps.push_back(v);
  }
  for (size_t i = 0; i < half_reps.size(); ++i) full_to_half[half_reps[i]] = static_cast<int>(i);

  const int VH = half_vertex_count();
  require(shape.basis.rows() == 3 * VH, "shape basis must have 3 * V_half rows");
  require(shape.bias.size() == 3 * VH, "shape bias must have 3 * V_half entries");
  require(shape.basis.cols() == shape.feature_dim, "shape feature_dim mismatch");

  const int J = skeleton.joint_count();
  require(J == kJointCount, "expected 35 joints");
  int roots = 0;
  for (int j = 0; j < J; ++j) {
    if (skeleton.parent[j] < 0)
      ++roots;
    else
      require(skeleton.parent[j] < J, "parent index out of range");
  }
  require(roots == 1, "skeleton must have exactly one root");
  joint_order(skeleton.parent);  // throws on cycles

  require(skeleton.joint_regressor.rows() == J && skeleton.joint_regressor.cols() == V,
          "joint_regressor shape mismatch");
  for (int j = 0; j < J; ++j) {
    double sum = 0;
    for (SparseMat::InnerIterator it(skeleton.joint_regressor, j); it; ++it) {
      require(it.value() >= 0, "joint_regressor has negative entries");
      sum += it.value();
    }
    require(std::abs(sum - 1.0) < 1e-6, "joint_regressor rows must sum to 1");
  }
  require(skeleton.skinning_weights.rows() == V && skeleton.skinning_weights.cols() == J,
          "skinning_weights shape mismatch");
  for (int v = 0; v < V; ++v) {
    double sum = 0;
    for (SparseMat::InnerIterator it(skeleton.skinning_weights, v); it; ++it) {
      require(it.value() >= 0, "skinning weights must be non-negative");
      sum += it.value();
    }
    require(std::abs(sum - 1.0) < 1e-6, "skinning weights must sum to 1 per vertex");
  }

  require(skeleton.mirror.size() == J, "joint mirror table size mismatch");
  for (int j = 0; j < J; ++j) {
    const int m = skeleton.mirror[j];
    require(m >= 0 && m < J && skeleton.mirror[m] == j, "joint mirror table is not an involution");
  }

  require(static_cast<int>(landmarks.entries.size()) == kLandmarkCount, "expected 28 landmarks");
  for (const auto& e : landmarks.entries) {
    require(e.face >= 0 && e.face < F, "landmark face index out of range");
    require(e.weights.minCoeff() >= 0, "landmark weights must be non-negative");
    require(std::abs(e.weights.sum() - 1.0) < 1e-6, "landmark weights must sum to 1");
  }

  // Landmark mirror pairs found by matching mirrored template positions.
  Points3 lm = landmarks3d(mesh.vertices, mesh.faces, landmarks);
  landmark_mirror = Eigen::VectorXi::Constant(kLandmarkCount, -1);
  for (int i = 0; i < kLandmarkCount; ++i) {
    const Vec3 target(-lm(i, 0), lm(i, 1), lm(i, 2));
    int best = -1;
    double best_d = 1e9;
    for (int k = 0; k < kLandmarkCount; ++k) {
      const double d = (lm.row(k).transpose() - target).norm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    require(best_d < 1e-6, "landmarks are not mirror-symmetric");
    landmark_mirror[i] = best;
  }

  if (uv.rows() > 0) {
    require(has_uv(), "uv must have one row per face corner");
    require(region_layout.size() == 4, "region_layout must have 4 rectangles");
    // Rectangles partition the atlas exactly.
    long total = 0;
    int max_x = 0, max_y = 0;
    for (const auto& r : region_layout) {
      require(r[2] > 0 && r[3] > 0, "region with non-positive size");
      total += static_cast<long>(r[2]) * r[3];
      max_x = std::max(max_x, r[0] + r[2]);
      max_y = std::max(max_y, r[1] + r[3]);
    }
    require(total == static_cast<long>(max_x) * max_y, "regions must partition the atlas");
    for (size_t a = 0; a < 4; ++a)
      for (size_t b = a + 1; b < 4; ++b) {
        const auto& p = region_layout[a];
        const auto& q = region_layout[b];
        const bool overlap = p[0] < q[0] + q[2] && q[0] < p[0] + p[2] &&
                             p[1] < q[1] + q[3] && q[1] < p[1] + p[3];
        require(!overlap, "regions overlap");
      }
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
      const double x = uv(i, 0) * max_x;
      const double y = uv(i, 1) * max_y;
      int hits = 0;
      for (const auto& r : region_layout)
        if (x >= r[0] && x <= r[0] + r[2] && y >= r[1] && y <= r[1] + r[3]) ++hits;
      require(hits >= 1, "uv coordinate outside every region");
    }
  }
}

PoseState PoseState::rest(const BodyModel& model) {
  PoseState s;
  s.shape_features = VecX::Zero(model.feature_dim());
  return s;
}

PoseState PoseState::canonicalized() const {
  PoseState out = *this;
  for (int j = 0; j < kJointCount; ++j) {
    const Vec3 r = canonicalize_rodrigues(theta.segment<3>(3 * j));
    out.theta.segment<3>(3 * j) = r;
  }
  return out;
}

Points3 reflect_half_displacements(const BodyModel& model, const VecX& half_dv) {
  const int V = model.vertex_count();
  if (half_dv.size() != 3 * model.half_vertex_count())
    throw std::invalid_argument("reflect: half displacement size mismatch");
  Points3 out(V, 3);
  for (int v = 0; v < V; ++v) {
    const int m = model.mesh.symmetry_map[v];
    const int slot = model.full_to_half[v] >= 0 ? model.full_to_half[v] : model.full_to_half[m];
    Vec3 d = half_dv.segment<3>(3 * slot);
    if (model.full_to_half[v] < 0) d.x() = -d.x();   // mirrored side
    if (m == v) d.x() = 0.0;                          // stay on the plane
    out.row(v) = d.transpose();
  }
  return out;
}

Points3 shape_vertices(const BodyModel& model, const VecX& features) {
  return shape_vertices(model, features, VecX());
}

Points3 shape_vertices(const BodyModel& model, const VecX& features, const VecX& free_dv) {
  if (features.size() != model.feature_dim())
    throw std::invalid_argument("shape_vertices: feature length mismatch");
  const VecX half = model.shape.basis * features + model.shape.bias;
  Points3 out = model.mesh.vertices + reflect_half_displacements(model, half);
  if (free_dv.size() > 0) {
    if (free_dv.size() != 3 * model.vertex_count())
      throw std::invalid_argument("shape_vertices: free_dv length mismatch");
    out += Eigen::Map<const Points3>(free_dv.data(), model.vertex_count(), 3);
  }
  return out;
}

MatX shape_vertex_jacobian(const BodyModel& model) {
  const int V = model.vertex_count();
  const int F = model.feature_dim();
  MatX jac = MatX::Zero(3 * V, F);
  for (int v = 0; v < V; ++v) {
    const int m = model.mesh.symmetry_map[v];
    const int slot = model.full_to_half[v] >= 0 ? model.full_to_half[v] : model.full_to_half[m];
    double sx = model.full_to_half[v] >= 0 ? 1.0 : -1.0;
    if (m == v) sx = 0.0;
    jac.row(3 * v + 0) = sx * model.shape.basis.row(3 * slot + 0);
    jac.row(3 * v + 1) = model.shape.basis.row(3 * slot + 1);
    jac.row(3 * v + 2) = model.shape.basis.row(3 * slot + 2);
  }
  return jac;
}

JointTransforms forward_kinematics(const BodyModel& model, const Points3& v_shape,
                                   const VecX& theta) {
  if (theta.size() != kPoseDim)
    throw std::invalid_argument("forward_kinematics: pose length must be 105");
  const int J = model.skeleton.joint_count();
  JointTransforms out;
  out.rot.resize(J);
  out.origin.resize(J, 3);
  out.rest_joints = model.skeleton.joint_regressor * v_shape;

  const std::vector<int> order = joint_order(model.skeleton.parent);
  for (int j : order) {
    const Mat3 local = rodrigues_to_matrix(theta.segment<3>(3 * j));
    const int p = model.skeleton.parent[j];
    if (p < 0) {
      out.rot[j] = local;
      out.origin.row(j) = out.rest_joints.row(j);
    } else {
      out.rot[j] = out.rot[p] * local;
      const Vec3 t = (out.rest_joints.row(j) - out.rest_joints.row(p)).transpose();
      out.origin.row(j) = out.origin.row(p) + (out.rot[p] * t).transpose();
    }
  }
  return out;
}

Points3 skin(const BodyModel& model, const Points3& v_shape,
             const JointTransforms& jt, const Vec3& gamma) {
  const int V = model.vertex_count();
  Points3 out(V, 3);
  for (int v = 0; v < V; ++v) {
    Vec3 acc = Vec3::Zero();
    const Vec3 p = v_shape.row(v).transpose();
    for (SparseMat::InnerIterator it(model.skeleton.skinning_weights, v); it; ++it) {
      const int j = static_cast<int>(it.col());
      const Vec3 rj = jt.rest_joints.row(j).transpose();
      const Vec3 oj = jt.origin.row(j).transpose();
      acc += it.value() * (jt.rot[j] * (p - rj) + oj);
    }
    out.row(v) = (acc + gamma).transpose();
  }
  return out;
}

Points3 landmarks3d(const Points3& posed, const FaceMatrix& faces,
                    const LandmarkEmbedding& embedding) {
  Points3 out(static_cast<Eigen::Index>(embedding.entries.size()), 3);
  for (size_t i = 0; i < embedding.entries.size(); ++i) {
    const auto& e = embedding.entries[i];
    if (e.face < 0 || e.face >= faces.rows())
      throw std::invalid_argument("landmarks3d: invalid face index");
    const auto f = faces.row(e.face);
    out.row(i) = e.weights.x() * posed.row(f[0]) + e.weights.y() * posed.row(f[1]) +
                 e.weights.z() * posed.row(f[2]);
  }
  return out;
}

PosedMesh pose_mesh(const BodyModel& model, const PoseState& state) {
  PosedMesh out;
  out.v_shape = shape_vertices(model, state.shape_features, state.free_dv);
  out.transforms = forward_kinematics(model, out.v_shape, state.theta);
  out.vertices = skin(model, out.v_shape, out.transforms, state.gamma);
  return out;
}

PoseJacobians pose_jacobians(const BodyModel& model, const PoseState& state,
                             const std::vector<int>& vertex_subset,
                             const PoseJacobianRequest& req) {
  const int V = model.vertex_count();
  const int J = model.skeleton.joint_count();
  const int F = model.feature_dim();

  PoseJacobians out;
  if (vertex_subset.empty()) {
    out.vertex_subset.resize(V);
    std::iota(out.vertex_subset.begin(), out.vertex_subset.end(), 0);
  } else {
    out.vertex_subset = vertex_subset;
  }
  const int K = static_cast<int>(out.vertex_subset.size());

  const Points3 v_shape = shape_vertices(model, state.shape_features, state.free_dv);
  const JointTransforms jt = forward_kinematics(model, v_shape, state.theta);
  const std::vector<int> order = joint_order(model.skeleton.parent);

  std::vector<std::vector<int>> children(J);
  for (int j = 0; j < J; ++j)
    if (model.skeleton.parent[j] >= 0) children[model.skeleton.parent[j]].push_back(j);

  if (req.gamma) {
    out.d_gamma = MatX::Zero(3 * K, 3);
    for (int k = 0; k < K; ++k) out.d_gamma.block<3, 3>(3 * k, 0).setIdentity();
  }

  if (req.theta) {
    out.d_theta = MatX::Zero(3 * K, kPoseDim);
    // Local rotation derivatives per joint.
    std::vector<Eigen::Matrix<double, 9, 3>> dlocal(J);
    std::vector<Mat3> local(J);
    for (int j = 0; j < J; ++j) {
      const RotationWithJacobian rj = rodrigues_to_matrix_with_jacobian(state.theta.segment<3>(3 * j));
      local[j] = rj.R;
      dlocal[j] = rj.dR;
    }
    std::vector<Mat3> dRW(J);
    std::vector<Vec3> da(J);
    std::vector<char> in_subtree(J);
    for (int m = 0; m < J; ++m) {
      for (int c = 0; c < 3; ++c) {
        std::fill(in_subtree.begin(), in_subtree.end(), 0);
        const Mat3 dLm = Eigen::Map<const Mat3>(dlocal[m].col(c).data());
        const int pm = model.skeleton.parent[m];
        dRW[m] = pm < 0 ? dLm : Mat3(jt.rot[pm] * dLm);
        da[m] = Vec3::Zero();
        in_subtree[m] = 1;
        // Parents precede children in `order`.
        for (int j : order) {
          const int p = model.skeleton.parent[j];
          if (j == m || p < 0 || !in_subtree[p]) continue;
          in_subtree[j] = 1;
          const Vec3 t = (jt.rest_joints.row(j) - jt.rest_joints.row(p)).transpose();
          dRW[j] = dRW[p] * local[j];
          da[j] = da[p] + dRW[p] * t;
        }
        const int col = 3 * m + c;
        for (int k = 0; k < K; ++k) {
          const int v = out.vertex_subset[k];
          const Vec3 p = v_shape.row(v).transpose();
          Vec3 acc = Vec3::Zero();
          for (SparseMat::InnerIterator it(model.skeleton.skinning_weights, v); it; ++it) {
            const int j = static_cast<int>(it.col());
            if (!in_subtree[j]) continue;
            const Vec3 rj = jt.rest_joints.row(j).transpose();
            acc += it.value() * (dRW[j] * (p - rj) + da[j]);
          }
          out.d_theta.block<3, 1>(3 * k, col) = acc;
        }
      }
    }
  }

  if (req.shape) {
    // Everything downstream of the features is affine in them, so the chain
    // through shaped vertices, rest joints, and bone translations is exact.
    const MatX dv = shape_vertex_jacobian(model);  // (3V, F)
    MatX dj = MatX::Zero(3 * J, F);
    for (int j = 0; j < J; ++j)
      for (SparseMat::InnerIterator it(model.skeleton.joint_regressor, j); it; ++it)
        dj.middleRows<3>(3 * j) += it.value() * dv.middleRows<3>(3 * it.col());
    MatX da = MatX::Zero(3 * J, F);
    for (int j : order) {
      const int p = model.skeleton.parent[j];
      if (p < 0)
        da.middleRows<3>(3 * j) = dj.middleRows<3>(3 * j);
      else
        da.middleRows<3>(3 * j) =
            da.middleRows<3>(3 * p) + jt.rot[p] * (dj.middleRows<3>(3 * j) - dj.middleRows<3>(3 * p));
    }
    out.d_shape = MatX::Zero(3 * K, F);
    for (int k = 0; k < K; ++k) {
      const int v = out.vertex_subset[k];
      for (SparseMat::InnerIterator it(model.skeleton.skinning_weights, v); it; ++it) {
        const int j = static_cast<int>(it.col());
        out.d_shape.middleRows<3>(3 * k) +=
            it.value() * (jt.rot[j] * (dv.middleRows<3>(3 * v) - dj.middleRows<3>(3 * j)) +
                          da.middleRows<3>(3 * j));
      }
    }
  }
  return out;
}

std::vector<int> landmark_vertex_set(const BodyModel& model) {
  std::set<int> verts;
  for (const auto& e : model.landmarks.entries) {
    const auto f = model.mesh.faces.row(e.face);
    verts.insert(f[0]);
    verts.insert(f[1]);
    verts.insert(f[2]);
  }
  return {verts.begin(), verts.end()};
}

VecX mirror_pose(const BodyModel& model, const VecX& theta) {
  if (theta.size() != kPoseDim) throw std::invalid_argument("mirror_pose: pose length must be 105");
  VecX out(kPoseDim);
  for (int j = 0; j < kJointCount; ++j) {
    const int m = model.skeleton.mirror[j];
    const Vec3 r = theta.segment<3>(3 * j);
    out.segment<3>(3 * m) = Vec3(r.x(), -r.y(), -r.z());
  }
  return out;
}

void export_obj(const std::string& path, const Points3& vertices, const FaceMatrix& faces,
                const Points2* uv) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_obj: cannot open " + path);
  os.precision(9);
  for (Eigen::Index v = 0; v < vertices.rows(); ++v)
    os << "v " << vertices(v, 0) << ' ' << vertices(v, 1) << ' ' << vertices(v, 2) << '\n';
  const bool with_uv = uv && uv->rows() == 3 * faces.rows();
  if (with_uv) {
    for (Eigen::Index i = 0; i < uv->rows(); ++i)
      os << "vt " << (*uv)(i, 0) << ' ' << 1.0 - (*uv)(i, 1) << '\n';
  }
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    if (with_uv) {
      os << "f " << faces(f, 0) + 1 << '/' << 3 * f + 1 << ' ' << faces(f, 1) + 1 << '/'
         << 3 * f + 2 << ' ' << faces(f, 2) + 1 << '/' << 3 * f + 3 << '\n';
    } else {
      os << "f " << faces(f, 0) + 1 << ' ' << faces(f, 1) + 1 << ' ' << faces(f, 2) + 1 << '\n';
    }
  }
  if (!os) throw std::runtime_error("export_obj: write failed for " + path);
}

}  // namespace quadfit
