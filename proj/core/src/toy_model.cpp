#include "quadfit/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "quadfit/rng.hpp"

namespace quadfit {

namespace {

// Joint layout. Indices are fixed: axial chain 0-12, ears 13/14, then one
// 5-joint chain per leg (fl, fr, bl, br).
struct JointSpec {
  const char* name;
  int parent;
  int mirror;
  Vec3 pos;
};

const std::vector<JointSpec>& joint_table() {
  static const std::vector<JointSpec> table = {
      {"root", -1, 0, {0.000, 0.000, -0.500}},
      {"spine1", 0, 1, {0.000, -0.020, -0.200}},
      {"spine2", 1, 2, {0.000, -0.040, 0.100}},
      {"spine3", 2, 3, {0.000, -0.040, 0.400}},
      {"chest", 3, 4, {0.000, -0.030, 0.620}},
      {"neck1", 4, 5, {0.000, -0.140, 0.760}},
      {"neck2", 5, 6, {0.000, -0.280, 0.880}},
      {"head", 6, 7, {0.000, -0.400, 0.980}},
      {"nose", 7, 8, {0.000, -0.420, 1.220}},
      {"tail1", 0, 9, {0.000, -0.020, -0.680}},
      {"tail2", 9, 10, {0.000, 0.060, -0.880}},
      {"tail3", 10, 11, {0.000, 0.160, -1.060}},
      {"tail_tip", 11, 12, {0.000, 0.260, -1.200}},
      {"ear_l", 7, 14, {0.085, -0.520, 0.920}},
      {"ear_r", 7, 13, {-0.085, -0.520, 0.920}},
      {"fl_scap", 4, 20, {0.140, 0.100, 0.550}},
      {"fl_upper", 15, 21, {0.160, 0.280, 0.540}},
      {"fl_knee", 16, 22, {0.160, 0.460, 0.520}},
      {"fl_ankle", 17, 23, {0.160, 0.640, 0.500}},
      {"fl_foot", 18, 24, {0.160, 0.800, 0.500}},
      {"fr_scap", 4, 15, {-0.140, 0.100, 0.550}},
      {"fr_upper", 20, 16, {-0.160, 0.280, 0.540}},
      {"fr_knee", 21, 17, {-0.160, 0.460, 0.520}},
      {"fr_ankle", 22, 18, {-0.160, 0.640, 0.500}},
      {"fr_foot", 23, 19, {-0.160, 0.800, 0.500}},
      {"bl_hip", 0, 30, {0.140, 0.080, -0.520}},
      {"bl_upper", 25, 31, {0.160, 0.260, -0.540}},
      {"bl_knee", 26, 32, {0.160, 0.440, -0.560}},
      {"bl_ankle", 27, 33, {0.160, 0.620, -0.580}},
      {"bl_foot", 28, 34, {0.160, 0.800, -0.600}},
      {"br_hip", 0, 25, {-0.140, 0.080, -0.520}},
      {"br_upper", 30, 26, {-0.160, 0.260, -0.540}},
      {"br_knee", 31, 27, {-0.160, 0.440, -0.560}},
      {"br_ankle", 32, 28, {-0.160, 0.620, -0.580}},
      {"br_foot", 33, 29, {-0.160, 0.800, -0.600}},
  };
  return table;
}

struct RingSpec {
  Vec3 center;
  Vec3 axis;
  double rx, ry;
  std::vector<std::pair<int, double>> weights;
  int reg_joint = -1;  // register this ring for the joint regressor
};

struct TubeSpec {
  std::string name;
  std::vector<RingSpec> rings;
  int region = 0;
};

// Geometry under construction plus chart-local uv per face corner.
struct Builder {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::vector<int> sym;
  std::vector<std::vector<std::pair<int, double>>> weights;

  struct FaceUV {
    int chart;
    Vec2 uv[3];  // chart-local in [0,1]^2
  };
  std::vector<FaceUV> face_uv;

  struct Chart {
    int region;
    int cols, rows;  // size in grid cells (cap charts use 3x3)
  };
  std::vector<Chart> charts;

  struct BuiltTube {
    std::vector<std::vector<int>> grid;  // [ring][segment]
    int cap_first = -1, cap_last = -1;
    int chart = -1;
  };
  std::map<std::string, BuiltTube> tubes;
  std::vector<std::pair<int, int>> regressor_rings;  // (joint, ring-id into ring_verts)
  std::vector<std::vector<int>> ring_verts;
};

void ring_frame(const Vec3& axis, Vec3* ex, Vec3* ey) {
  Vec3 raw = axis.cross(Vec3::UnitX());
  if (raw.norm() < 1e-9) raw = axis.cross(Vec3::UnitY());
  *ey = raw.normalized();
  *ex = ey->cross(axis).normalized();
}

int add_vertex(Builder* b, const Vec3& p, const std::vector<std::pair<int, double>>& w) {
  b->verts.push_back(p);
  b->weights.push_back(w);
  b->sym.push_back(-1);
  return static_cast<int>(b->verts.size()) - 1;
}

void add_face(Builder* b, int v0, int v1, int v2, int chart, const Vec2& uv0, const Vec2& uv1,
              const Vec2& uv2) {
  b->faces.push_back({v0, v1, v2});
  Builder::FaceUV fu;
  fu.chart = chart;
  fu.uv[0] = uv0;
  fu.uv[1] = uv1;
  fu.uv[2] = uv2;
  b->face_uv.push_back(fu);
}

// Builds one tube with both caps. Mirror bookkeeping: within a ring,
// segment k pairs with (n/2 - k) mod n (used only for axial tubes).
void build_tube(Builder* b, const TubeSpec& spec, int n) {
  Builder::BuiltTube tube;
  const int R = static_cast<int>(spec.rings.size());
  tube.grid.resize(R);
  for (int r = 0; r < R; ++r) {
    const RingSpec& ring = spec.rings[r];
    Vec3 ex, ey;
    ring_frame(ring.axis.normalized(), &ex, &ey);
    tube.grid[r].resize(n);
    for (int k = 0; k < n; ++k) {
      const double a = 2.0 * M_PI * k / n;
      const Vec3 p = ring.center + ring.rx * std::cos(a) * ex + ring.ry * std::sin(a) * ey;
      tube.grid[r][k] = add_vertex(b, p, ring.weights);
    }
    if (ring.reg_joint >= 0) {
      b->regressor_rings.emplace_back(ring.reg_joint, static_cast<int>(b->ring_verts.size()));
      b->ring_verts.push_back(tube.grid[r]);
    }
  }

  // Side quads: one chart, columns around the ring (with a duplicated seam
  // column at u = 1), rows along the tube.
  const int chart = static_cast<int>(b->charts.size());
  b->charts.push_back({spec.region, n, R - 1});
  tube.chart = chart;
  auto guv = [&](int col, int row) {
    return Vec2(static_cast<double>(col) / n, static_cast<double>(row) / (R - 1));
  };
  for (int r = 0; r + 1 < R; ++r) {
    for (int k = 0; k < n; ++k) {
      const int k2 = (k + 1) % n;
      const int a0 = tube.grid[r][k], a1 = tube.grid[r][k2];
      const int b0 = tube.grid[r + 1][k], b1 = tube.grid[r + 1][k2];
      add_face(b, a0, b0, b1, chart, guv(k, r), guv(k, r + 1), guv(k + 1, r + 1));
      add_face(b, a0, b1, a1, chart, guv(k, r), guv(k + 1, r + 1), guv(k + 1, r));
    }
  }

  // Caps: an apex slightly beyond the end ring, fanned as its own chart.
  auto build_cap = [&](int ring_idx, double dir) {
    const RingSpec& ring = spec.rings[ring_idx];
    const Vec3 apex =
        ring.center + dir * ring.axis.normalized() * (0.6 * std::min(ring.rx, ring.ry));
    const int apex_id = add_vertex(b, apex, ring.weights);
    const int cap_chart = static_cast<int>(b->charts.size());
    b->charts.push_back({spec.region, 3, 3});
    auto cuv = [&](int k) {
      const double a = 2.0 * M_PI * k / n;
      return Vec2(0.5 + 0.45 * std::cos(a), 0.5 + 0.45 * std::sin(a));
    };
    for (int k = 0; k < n; ++k) {
      const int k2 = (k + 1) % n;
      const int r0 = tube.grid[ring_idx][k], r1 = tube.grid[ring_idx][k2];
      if (dir < 0)
        add_face(b, apex_id, r0, r1, cap_chart, Vec2(0.5, 0.5), cuv(k), cuv(k + 1));
      else
        add_face(b, apex_id, r1, r0, cap_chart, Vec2(0.5, 0.5), cuv(k + 1), cuv(k));
    }
    return apex_id;
  };
  tube.cap_first = build_cap(0, -1.0);
  tube.cap_last = build_cap(R - 1, 1.0);

  // Within-ring mirror pairing for axial tubes (centers on the plane).
  bool axial = true;
  for (const auto& ring : spec.rings) axial = axial && std::abs(ring.center.x()) < 1e-12;
  if (axial) {
    for (int r = 0; r < R; ++r)
      for (int k = 0; k < n; ++k)
        b->sym[tube.grid[r][k]] = tube.grid[r][((n / 2 - k) % n + n) % n];
    b->sym[tube.cap_first] = tube.cap_first;
    b->sym[tube.cap_last] = tube.cap_last;
  }
  b->tubes[spec.name] = std::move(tube);
}

// Builds the mirrored copy of an already-built tube: positions mirrored
// across x = 0, winding flipped, weights mapped through the joint mirror.
void build_mirrored_tube(Builder* b, const std::string& src_name, const std::string& dst_name,
                         int region, int n) {
  const Builder::BuiltTube src = b->tubes.at(src_name);
  const auto& joints = joint_table();
  Builder::BuiltTube dst;
  dst.grid.resize(src.grid.size());

  auto mirror_vertex = [&](int v) {
    const Vec3 p = b->verts[v];
    std::vector<std::pair<int, double>> w;
    for (const auto& [j, val] : b->weights[v]) w.emplace_back(joints[j].mirror, val);
    const int id = add_vertex(b, Vec3(-p.x(), p.y(), p.z()), w);
    b->sym[id] = v;
    b->sym[v] = id;
    return id;
  };

  const int R = static_cast<int>(src.grid.size());
  for (int r = 0; r < R; ++r) {
    dst.grid[r].resize(n);
    for (int k = 0; k < n; ++k) dst.grid[r][k] = mirror_vertex(src.grid[r][k]);
  }
  dst.cap_first = mirror_vertex(src.cap_first);
  dst.cap_last = mirror_vertex(src.cap_last);

  // Mirror faces of the source tube: they are exactly the faces whose
  // vertices all belong to the source tube's id range.
  std::map<int, int> remap;
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < n; ++k) remap[src.grid[r][k]] = dst.grid[r][k];
  remap[src.cap_first] = dst.cap_first;
  remap[src.cap_last] = dst.cap_last;

  std::map<int, int> chart_remap;
  const size_t n_faces = b->faces.size();
  for (size_t f = 0; f < n_faces; ++f) {
    const auto face = b->faces[f];
    if (!remap.count(face[0]) || !remap.count(face[1]) || !remap.count(face[2])) continue;
    const Builder::FaceUV fu = b->face_uv[f];  // copy: add_face reallocates
    if (!chart_remap.count(fu.chart)) {
      chart_remap[fu.chart] = static_cast<int>(b->charts.size());
      Builder::Chart chart = b->charts[fu.chart];
      chart.region = region;
      b->charts.push_back(chart);
    }
    add_face(b, remap[face[0]], remap[face[2]], remap[face[1]], chart_remap[fu.chart],
             fu.uv[0], fu.uv[2], fu.uv[1]);
  }
  // Mirror the regressor rings belonging to the source tube.
  const size_t n_rings = b->regressor_rings.size();
  for (size_t i = 0; i < n_rings; ++i) {
    const auto [joint, ring_id] = b->regressor_rings[i];
    const auto& ring = b->ring_verts[ring_id];
    if (ring.empty() || !remap.count(ring[0])) continue;
    std::vector<int> mirrored;
    mirrored.reserve(ring.size());
    for (int v : ring) mirrored.push_back(remap.at(v));
    b->regressor_rings.emplace_back(joints[joint].mirror, static_cast<int>(b->ring_verts.size()));
    b->ring_verts.push_back(std::move(mirrored));
  }
  b->tubes[dst_name] = std::move(dst);
}

// Shelf-packs the charts of one region; returns pixel rects. Cell size is
// the largest that fits every chart.
std::vector<std::array<int, 4>> pack_region(const std::vector<Builder::Chart>& charts,
                                            const std::vector<int>& ids,
                                            const std::array<int, 4>& region) {
  const int gutter = 2;
  for (int cell = 12; cell >= 2; --cell) {
    std::vector<std::array<int, 4>> rects(ids.size());
    int x = gutter, y = gutter, shelf = 0;
    bool ok = true;
    for (size_t i = 0; i < ids.size() && ok; ++i) {
      const auto& chart = charts[ids[i]];
      const int w = chart.cols * cell;
      const int h = chart.rows * cell;
      if (x + w + gutter > region[2]) {
        x = gutter;
        y += shelf + gutter;
        shelf = 0;
      }
      if (x + w + gutter > region[2] || y + h + gutter > region[3]) {
        ok = false;
        break;
      }
      rects[i] = {region[0] + x, region[1] + y, w, h};
      x += w + gutter;
      shelf = std::max(shelf, h);
    }
    if (ok) return rects;
  }
  throw std::runtime_error("toy model: uv charts do not fit the atlas regions");
}

int argext_ring(const Builder& b, const std::vector<int>& ring, int axis, bool want_max) {
  int best = ring[0];
  for (int v : ring) {
    const double val = b.verts[v][axis];
    const double cur = b.verts[best][axis];
    if (want_max ? val > cur : val < cur) best = v;
  }
  return best;
}

}  // namespace

void ToyModelConfig::validate() const {
  if (ring_segments < 8 || ring_segments % 4 != 0)
    throw std::invalid_argument("toy model: ring_segments must be >= 8 and divisible by 4");
  if (shape_dims < 8) throw std::invalid_argument("toy model: shape_dims must be >= 8");
  if (size_scale <= 0) throw std::invalid_argument("toy model: size_scale must be positive");
}

BodyModel make_toy_model(const ToyModelConfig& config) {
  config.validate();
  const int n = config.ring_segments;
  const auto& joints = joint_table();
  const Vec3 zax(0, 0, 1);

  Builder b;
  auto W1 = [](int j) { return std::vector<std::pair<int, double>>{{j, 1.0}}; };
  auto W2 = [](int j0, int j1) {
    return std::vector<std::pair<int, double>>{{j0, 0.5}, {j1, 0.5}};
  };

  {
    TubeSpec torso{"torso", {}, 0};
    torso.rings = {
        {{0, 0.010, -0.640}, zax, 0.185, 0.205, W1(0), -1},
        {{0, 0.000, -0.500}, zax, 0.250, 0.280, W1(0), 0},
        {{0, -0.020, -0.200}, zax, 0.280, 0.310, W1(1), 1},
        {{0, -0.040, 0.100}, zax, 0.300, 0.335, W1(2), 2},
        {{0, -0.040, 0.400}, zax, 0.280, 0.310, W1(3), 3},
        {{0, -0.030, 0.620}, zax, 0.240, 0.265, W1(4), 4},
        {{0, -0.025, 0.700}, zax, 0.170, 0.190, W1(4), -1},
    };
    build_tube(&b, torso, n);
  }
  {
    TubeSpec tail{"tail", {}, 0};
    tail.rings = {
        {{0, -0.030, -0.620}, {0, -0.35, -1}, 0.050, 0.050, W1(9), -1},
        {{0, -0.020, -0.680}, {0, 0.25, -1}, 0.045, 0.045, W1(9), 9},
        {{0, 0.060, -0.880}, {0, 0.45, -1}, 0.040, 0.040, W1(10), 10},
        {{0, 0.160, -1.060}, {0, 0.55, -1}, 0.034, 0.034, W1(11), 11},
        {{0, 0.260, -1.200}, {0, 0.6, -1}, 0.027, 0.027, W1(12), 12},
        {{0, 0.300, -1.260}, {0, 0.6, -1}, 0.018, 0.018, W1(12), -1},
    };
    build_tube(&b, tail, n);
  }
  {
    TubeSpec neck{"neck", {}, 1};
    neck.rings = {
        {{0, -0.060, 0.700}, {0, -0.6, 0.8}, 0.150, 0.165, W1(4), -1},
        {{0, -0.140, 0.760}, {0, -0.7, 0.72}, 0.140, 0.150, W1(5), 5},
        {{0, -0.280, 0.880}, {0, -0.75, 0.66}, 0.120, 0.130, W1(6), 6},
        {{0, -0.360, 0.940}, {0, -0.75, 0.66}, 0.110, 0.120, W1(6), -1},
    };
    build_tube(&b, neck, n);
  }
  {
    TubeSpec head{"head", {}, 1};
    head.rings = {
        {{0, -0.380, 0.900}, {0, -0.12, 1}, 0.120, 0.125, W1(7), -1},
        {{0, -0.400, 0.980}, {0, -0.08, 1}, 0.135, 0.140, W1(7), 7},
        {{0, -0.410, 1.100}, {0, -0.04, 1}, 0.115, 0.120, W2(7, 8), -1},
        {{0, -0.420, 1.220}, zax, 0.085, 0.090, W1(8), 8},
        {{0, -0.420, 1.300}, zax, 0.060, 0.062, W1(8), -1},
    };
    build_tube(&b, head, n);
  }
  {
    TubeSpec leg{"fl", {}, 2};
    leg.rings = {
        {{0.130, 0.020, 0.555}, {0.1, 1, -0.05}, 0.080, 0.080, W2(15, 4), -1},
        {{0.140, 0.100, 0.550}, {0.1, 1, -0.05}, 0.075, 0.075, W1(15), 15},
        {{0.160, 0.280, 0.540}, {0, 1, -0.08}, 0.062, 0.062, W1(16), 16},
        {{0.160, 0.460, 0.520}, {0, 1, -0.1}, 0.052, 0.052, W1(17), 17},
        {{0.160, 0.640, 0.500}, {0, 1, -0.08}, 0.046, 0.046, W1(18), 18},
        {{0.160, 0.800, 0.500}, {0, 1, 0}, 0.050, 0.050, W1(19), 19},
        {{0.160, 0.860, 0.500}, {0, 1, 0}, 0.048, 0.048, W1(19), -1},
    };
    build_tube(&b, leg, n);
    build_mirrored_tube(&b, "fl", "fr", 2, n);
  }
  {
    TubeSpec leg{"bl", {}, 3};
    leg.rings = {
        {{0.130, 0.000, -0.515}, {0.1, 1, -0.05}, 0.085, 0.085, W2(25, 0), -1},
        {{0.140, 0.080, -0.520}, {0.1, 1, -0.08}, 0.080, 0.080, W1(25), 25},
        {{0.160, 0.260, -0.540}, {0, 1, -0.1}, 0.065, 0.065, W1(26), 26},
        {{0.160, 0.440, -0.560}, {0, 1, -0.1}, 0.054, 0.054, W1(27), 27},
        {{0.160, 0.620, -0.580}, {0, 1, -0.08}, 0.047, 0.047, W1(28), 28},
        {{0.160, 0.800, -0.600}, {0, 1, 0}, 0.050, 0.050, W1(29), 29},
        {{0.160, 0.860, -0.600}, {0, 1, 0}, 0.048, 0.048, W1(29), -1},
    };
    build_tube(&b, leg, n);
    build_mirrored_tube(&b, "bl", "br", 3, n);
  }
  {
    TubeSpec ear{"ear_l", {}, 1};
    ear.rings = {
        {{0.070, -0.480, 0.915}, {0.2, -1, 0.1}, 0.036, 0.036, W1(13), -1},
        {{0.085, -0.520, 0.920}, {0.25, -1, 0.12}, 0.032, 0.032, W1(13), 13},
        {{0.105, -0.600, 0.930}, {0.25, -1, 0.12}, 0.014, 0.014, W1(13), -1},
    };
    build_tube(&b, ear, n);
    build_mirrored_tube(&b, "ear_l", "ear_r", 1, n);
  }

  // Force exact mirror symmetry: representatives keep their coordinates,
  // partners get the reflected copy, on-plane vertices get x = 0 exactly.
  const int V = static_cast<int>(b.verts.size());
  for (int v = 0; v < V; ++v) {
    if (b.sym[v] < 0) throw std::logic_error("toy model: vertex without mirror partner");
  }
  for (int v = 0; v < V; ++v) {
    const int m = b.sym[v];
    if (m == v) {
      b.verts[v].x() = 0.0;
    } else if (b.verts[v].x() > b.verts[m].x() || (b.verts[v].x() == b.verts[m].x() && v < m)) {
      b.verts[m] = Vec3(-b.verts[v].x(), b.verts[v].y(), b.verts[v].z());
    }
  }
  if (config.size_scale != 1.0)
    for (auto& p : b.verts) p *= config.size_scale;

  BodyModel model;
  model.mesh.vertices.resize(V, 3);
  for (int v = 0; v < V; ++v) model.mesh.vertices.row(v) = b.verts[v].transpose();
  model.mesh.faces.resize(static_cast<Eigen::Index>(b.faces.size()), 3);
  for (size_t f = 0; f < b.faces.size(); ++f)
    model.mesh.faces.row(static_cast<Eigen::Index>(f)) << b.faces[f][0], b.faces[f][1],
        b.faces[f][2];
  model.mesh.symmetry_map = b.sym;

  // Skeleton tables.
  const int J = static_cast<int>(joints.size());
  model.skeleton.parent.resize(J);
  model.skeleton.mirror.resize(J);
  for (int j = 0; j < J; ++j) {
    model.skeleton.parent[j] = joints[j].parent;
    model.skeleton.mirror[j] = joints[j].mirror;
  }
  {
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<char> covered(J, 0);
    for (const auto& [joint, ring_id] : b.regressor_rings) {
      if (covered[joint]) continue;
      covered[joint] = 1;
      const auto& ring = b.ring_verts[ring_id];
      for (int v : ring) trip.emplace_back(joint, v, 1.0 / ring.size());
    }
    for (int j = 0; j < J; ++j)
      if (!covered[j]) throw std::logic_error("toy model: joint without a regressor ring");
    model.skeleton.joint_regressor = SparseMat(J, V);
    model.skeleton.joint_regressor.setFromTriplets(trip.begin(), trip.end());
  }
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int v = 0; v < V; ++v) {
      double sum = 0;
      for (const auto& [j, w] : b.weights[v]) sum += w;
      for (const auto& [j, w] : b.weights[v]) trip.emplace_back(v, j, w / sum);
    }
    model.skeleton.skinning_weights = SparseMat(V, J);
    model.skeleton.skinning_weights.setFromTriplets(trip.begin(), trip.end());
  }

  // Landmarks: torso/axial first (the fitter's coarse stage uses 0..7).
  {
    std::map<int, std::pair<int, int>> vertex_face;  // vertex -> (face, corner)
    for (Eigen::Index f = 0; f < model.mesh.faces.rows(); ++f)
      for (int c = 0; c < 3; ++c)
        vertex_face.emplace(model.mesh.faces(f, c), std::make_pair(static_cast<int>(f), c));
    auto vertex_landmark = [&](int v) {
      const auto [face, corner] = vertex_face.at(v);
      LandmarkEmbedding::Entry e;
      e.face = face;
      e.weights = Vec3::Zero();
      e.weights[corner] = 1.0;
      return e;
    };
    const auto& torso = b.tubes.at("torso");
    const auto& neck = b.tubes.at("neck");
    const auto& head = b.tubes.at("head");
    const auto& tail = b.tubes.at("tail");
    const auto& fl = b.tubes.at("fl");
    const auto& bl = b.tubes.at("bl");
    const auto& ear_l = b.tubes.at("ear_l");
    std::vector<int> lm_verts = {
        argext_ring(b, torso.grid[5], 1, false),  // 0 withers
        argext_ring(b, torso.grid[1], 1, false),  // 1 croup
        argext_ring(b, torso.grid[5], 1, true),   // 2 sternum
        argext_ring(b, torso.grid[3], 1, true),   // 3 belly
        argext_ring(b, torso.grid[3], 1, false),  // 4 mid back
        argext_ring(b, neck.grid[1], 1, true),    // 5 throat
        argext_ring(b, tail.grid[1], 1, false),   // 6 tail base
        argext_ring(b, neck.grid[1], 1, false),   // 7 neck base
        head.cap_last,                            // 8 nose tip
    };
    const int eye_l = argext_ring(b, head.grid[1], 0, true);
    lm_verts.push_back(eye_l);                  // 9
    lm_verts.push_back(b.sym[eye_l]);           // 10
    lm_verts.push_back(ear_l.cap_last);         // 11
    lm_verts.push_back(b.sym[ear_l.cap_last]);  // 12
    lm_verts.push_back(tail.cap_last);          // 13
    const int shoulder = argext_ring(b, fl.grid[1], 0, true);
    const int fl_knee = argext_ring(b, fl.grid[3], 0, true);
    const int fl_ankle = argext_ring(b, fl.grid[4], 0, true);
    const int hip = argext_ring(b, bl.grid[1], 0, true);
    const int bl_knee = argext_ring(b, bl.grid[3], 0, true);
    for (int v : {shoulder, fl_knee, fl_ankle, fl.cap_last, hip, bl_knee, bl.cap_last}) {
      lm_verts.push_back(v);
      lm_verts.push_back(b.sym[v]);
    }
    for (int v : lm_verts) model.landmarks.entries.push_back(vertex_landmark(v));
    if (model.landmarks.entries.size() != kLandmarkCount)
      throw std::logic_error("toy model: landmark count mismatch");
  }

  // Atlas charts -> global uv.
  {
    model.region_layout = TextureAtlas::quadrant_layout(kAtlasSize);
    std::vector<std::array<int, 4>> chart_rect(b.charts.size());
    for (int region = 0; region < 4; ++region) {
      std::vector<int> ids;
      for (size_t c = 0; c < b.charts.size(); ++c)
        if (b.charts[c].region == region) ids.push_back(static_cast<int>(c));
      const auto rects = pack_region(b.charts, ids, model.region_layout[region]);
      for (size_t i = 0; i < ids.size(); ++i) chart_rect[ids[i]] = rects[i];
    }
    model.uv.resize(3 * model.mesh.faces.rows(), 2);
    for (size_t f = 0; f < b.face_uv.size(); ++f) {
      const auto& fu = b.face_uv[f];
      const auto& rect = chart_rect[fu.chart];
      for (int c = 0; c < 3; ++c) {
        const Eigen::Index row = static_cast<Eigen::Index>(3 * f + c);
        model.uv(row, 0) = (rect[0] + fu.uv[c].x() * rect[2]) / kAtlasSize;
        model.uv(row, 1) = (rect[1] + fu.uv[c].y() * rect[3]) / kAtlasSize;
      }
    }
  }

  // Shape layer: structured low-frequency deformation fields plus seeded
  // smooth RBF fields, evaluated on the half mesh.
  {
    // finalize() builds half_reps; run a first pass to get them (shape layer
    // dimensions depend on the half count).
    model.shape.feature_dim = config.shape_dims;
    model.shape.basis = MatX::Zero(3, config.shape_dims);  // placeholder for finalize
    model.shape.bias = VecX::Zero(3);
    std::vector<int> reps;
    for (int v = 0; v < V; ++v) {
      const int m = model.mesh.symmetry_map[v];
      if (m == v || model.mesh.vertices(v, 0) > model.mesh.vertices(m, 0) ||
          (model.mesh.vertices(v, 0) == model.mesh.vertices(m, 0) && v < m))
        reps.push_back(v);
    }
    const int VH = static_cast<int>(reps.size());
    const Vec3 centroid = model.mesh.vertices.colwise().mean().transpose();
    Vec3 bb_min = model.mesh.vertices.colwise().minCoeff().transpose();
    Vec3 bb_max = model.mesh.vertices.colwise().maxCoeff().transpose();

    Rng rng(Rng::mix(config.seed, 0xA71A5u));
    std::vector<std::vector<std::pair<Vec3, Vec3>>> rbf(config.shape_dims);
    for (int d = 7; d < config.shape_dims; ++d) {
      const double amp = d < 20 ? 0.02 : 0.008;
      const int centers = 4 + rng.uniform_int(3);
      for (int c = 0; c < centers; ++c) {
        Vec3 center;
        for (int a = 0; a < 3; ++a) center[a] = rng.uniform(bb_min[a], bb_max[a]);
        Vec3 ampv;
        for (int a = 0; a < 3; ++a) ampv[a] = rng.uniform(-amp, amp);
        rbf[d].emplace_back(center, ampv);
      }
    }
    auto field = [&](int d, const Vec3& p) -> Vec3 {
      switch (d) {
        case 0:
          return 0.06 * (p - centroid);
        case 1: {  // belly girth
          const double w = std::exp(-std::pow((p.z() - 0.05) / 0.35, 2));
          return Vec3(0.07 * w * p.x(), 0.07 * w * (p.y() + 0.04), 0.0);
        }
        case 2:  // leg length
          return Vec3(0, 0.12 * std::max(0.0, p.y() - 0.05), 0);
        case 3:  // neck/head reach
          return Vec3(0, 0, 0.10 * std::max(0.0, p.z() - 0.65));
        case 4: {  // head size
          const Vec3 c_head(0, -0.41, 1.05);
          const double g = std::exp(-(p - c_head).squaredNorm() / (2 * 0.18 * 0.18));
          return 0.05 * g * (p - c_head);
        }
        case 5:  // tail droop
          return Vec3(0, 0.08 * std::max(0.0, -0.6 - p.z()), 0);
        case 6:  // torso length
          return Vec3(0, 0, 0.06 * std::tanh(p.z() / 0.5));
        default: {
          Vec3 acc = Vec3::Zero();
          for (const auto& [center, ampv] : rbf[d])
            acc += ampv * std::exp(-(p - center).squaredNorm() / (2 * 0.25 * 0.25));
          return acc;
        }
      }
    };
    model.shape.basis = MatX::Zero(3 * VH, config.shape_dims);
    model.shape.bias = VecX::Zero(3 * VH);
    for (int i = 0; i < VH; ++i) {
      const Vec3 p = model.mesh.vertices.row(reps[i]).transpose();
      for (int d = 0; d < config.shape_dims; ++d)
        model.shape.basis.block<3, 1>(3 * i, d) = field(d, p);
    }
  }

  model.finalize();
  return model;
}

std::vector<VecX> make_toy_pose_pool(int count, uint64_t seed) {
  if (count < 2) throw std::invalid_argument("pose pool: need at least 2 poses");
  std::vector<VecX> pool;
  pool.reserve(count);
  Rng rng(Rng::mix(seed, 0x9001u));
  const double yaw_base[6] = {M_PI / 2, -M_PI / 2, 2.2, -2.2, 1.1, -1.1};
  auto set3 = [](VecX& th, int j, double x, double y, double z) {
    th[3 * j + 0] = x;
    th[3 * j + 1] = y;
    th[3 * j + 2] = z;
  };
  for (int i = 0; i < count; ++i) {
    VecX th = VecX::Zero(kPoseDim);
    const double yaw = yaw_base[i % 6] + 0.25 * rng.normal();
    set3(th, 0, 0.06 * rng.normal(), yaw, 0.05 * rng.normal());
    const double phase = 2.0 * M_PI * i / 9.0 + 0.4 * rng.normal();
    // Gait-like alternating leg swings about x (legs run along +y).
    const double swing[4] = {0.32 * std::sin(phase), 0.32 * std::sin(phase + M_PI),
                             0.30 * std::sin(phase + M_PI + 0.4), 0.30 * std::sin(phase + 0.4)};
    const int uppers[4] = {16, 21, 26, 31};
    const int knees[4] = {17, 22, 27, 32};
    const int ankles[4] = {18, 23, 28, 33};
    for (int leg = 0; leg < 4; ++leg) {
      set3(th, uppers[leg], swing[leg] + 0.05 * rng.normal(), 0, 0.03 * rng.normal());
      set3(th, knees[leg], -0.5 * swing[leg] + 0.22 * std::max(0.0, std::sin(phase + leg)), 0, 0);
      set3(th, ankles[leg], 0.15 * std::sin(phase + 0.8 * leg), 0, 0);
    }
    for (int s : {1, 2, 3})
      set3(th, s, 0.04 * std::sin(phase + s) + 0.02 * rng.normal(), 0.03 * rng.normal(), 0.02 * rng.normal());
    const double graze = -0.12 + 0.15 * std::sin(0.7 * i) + 0.05 * rng.normal();
    set3(th, 5, graze, 0.05 * rng.normal(), 0);
    set3(th, 6, 0.8 * graze, 0.04 * rng.normal(), 0);
    set3(th, 7, 0.10 * rng.normal(), 0.08 * rng.normal(), 0.03 * rng.normal());
    for (int t : {9, 10, 11, 12})
      set3(th, t, 0.08 * rng.normal(), 0.18 * std::sin(0.9 * i + t) + 0.06 * rng.normal(), 0);
    for (int e : {13, 14}) set3(th, e, 0.06 * rng.normal(), 0.05 * rng.normal(), 0.15 * rng.normal());
    pool.push_back(th);
  }
  return pool;
}

TextureAtlas make_toy_atlas(const BodyModel& model, const TexelMap& texel_map, uint64_t seed) {
  TextureAtlas atlas;
  atlas.regions = model.region_layout.empty() ? TextureAtlas::quadrant_layout(kAtlasSize)
                                              : model.region_layout;
  const int A = texel_map.size;
  atlas.image = Image(A, A, 3);

  Rng rng(Rng::mix(seed, 0x7EC5u));
  const double phase = rng.uniform(0, 2 * M_PI);
  const double phase2 = rng.uniform(0, 2 * M_PI);
  const double tint = rng.uniform(-0.06, 0.06);
  const Vec3 base(0.82 + tint, 0.78, 0.70 - tint);
  const Vec3 stripe(0.26, 0.23 - 0.5 * tint, 0.21);

  std::vector<uint8_t> filled(static_cast<size_t>(A) * A, 0);
  for (int ty = 0; ty < A; ++ty) {
    for (int tx = 0; tx < A; ++tx) {
      const size_t i = static_cast<size_t>(ty) * A + tx;
      const int f = texel_map.face[i];
      if (f < 0) continue;
      Vec3 p = Vec3::Zero();
      for (int c = 0; c < 3; ++c)
        p += static_cast<double>(texel_map.bary[3 * i + c]) *
             model.mesh.vertices.row(model.mesh.faces(f, c)).transpose();
      double t = p.z() + 0.55 * p.y();
      t += 0.05 * std::sin(2 * M_PI * (1.7 * p.y() + 0.9 * p.z()) + phase2);
      const double s = 0.5 + 0.5 * std::sin(2 * M_PI * t / 0.22 + phase);
      const Vec3 color = base + s * (stripe - base);
      for (int c = 0; c < 3; ++c) atlas.image.at(tx, ty, c) = static_cast<float>(color[c]);
      filled[i] = 1;
    }
  }
  // Dilate chart colors into the gutters so bilinear taps never read junk.
  std::vector<uint8_t> next = filled;
  for (int pass = 0; pass < 64; ++pass) {
    bool changed = false;
    for (int ty = 0; ty < A; ++ty) {
      for (int tx = 0; tx < A; ++tx) {
        const size_t i = static_cast<size_t>(ty) * A + tx;
        if (filled[i]) continue;
        double acc[3] = {0, 0, 0};
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = tx + dx, ny = ty + dy;
            if (nx < 0 || ny < 0 || nx >= A || ny >= A) continue;
            if (!filled[static_cast<size_t>(ny) * A + nx]) continue;
            for (int c = 0; c < 3; ++c) acc[c] += atlas.image.at(nx, ny, c);
            ++cnt;
          }
        if (cnt > 0) {
          for (int c = 0; c < 3; ++c) atlas.image.at(tx, ty, c) = static_cast<float>(acc[c] / cnt);
          next[i] = 1;
          changed = true;
        }
      }
    }
    filled = next;
    if (!changed) break;
  }
  for (size_t i = 0; i < filled.size(); ++i)
    if (!filled[i])
      for (int c = 0; c < 3; ++c)
        atlas.image.data[3 * i + c] = static_cast<float>(base[c]);
  return atlas;
}

std::vector<int> toy_torso_landmarks() { return {0, 1, 2, 3, 4, 5, 6, 7}; }

}  // namespace quadfit
