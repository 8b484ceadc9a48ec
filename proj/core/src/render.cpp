#include "quadfit/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace quadfit {

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Signed distance from p to the triangle boundary, positive inside.
// Fills the closest-edge index, its parameter t and the unit direction
// n = (p - closest_point) / dist for the gradient.
struct SignedDist {
  double d = 0;
  int edge = 0;
  double t = 0;
  Vec2 n = Vec2::Zero();
  bool degenerate = false;
};

SignedDist signed_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  SignedDist out;
  const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  if (std::abs(area) < 1e-12) {
    out.degenerate = true;
    return out;
  }
  const double sgn = area > 0 ? 1.0 : -1.0;
  const double s0 = sgn * ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x());
  const double s1 = sgn * ((c - b).x() * (p - b).y() - (c - b).y() * (p - b).x());
  const double s2 = sgn * ((a - c).x() * (p - c).y() - (a - c).y() * (p - c).x());
  const bool inside = s0 >= 0 && s1 >= 0 && s2 >= 0;

  const Vec2 v0[3] = {a, b, c};
  const Vec2 v1[3] = {b, c, a};
  double best = 1e30;
  int best_e = 0;
  double best_t = 0;
  Vec2 best_q = Vec2::Zero();
  for (int e = 0; e < 3; ++e) {
    const Vec2 d = v1[e] - v0[e];
    const double len2 = d.squaredNorm();
    double t = len2 > 0 ? (p - v0[e]).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = v0[e] + t * d;
    const double dist = (p - q).norm();
    if (dist < best) {
      best = dist;
      best_e = e;
      best_t = t;
      best_q = q;
    }
  }
  out.edge = best_e;
  out.t = best_t;
  out.d = inside ? best : -best;
  out.n = best > 1e-12 ? Vec2((p - best_q) / best) : Vec2::Zero();
  return out;
}

struct FaceBox {
  int x0, x1, y0, y1;
  bool empty;
};

FaceBox face_bbox(const Vec2& a, const Vec2& b, const Vec2& c, double pad, int w, int h) {
  FaceBox box{};
  const double minx = std::min({a.x(), b.x(), c.x()}) - pad;
  const double maxx = std::max({a.x(), b.x(), c.x()}) + pad;
  const double miny = std::min({a.y(), b.y(), c.y()}) - pad;
  const double maxy = std::max({a.y(), b.y(), c.y()}) + pad;
  box.x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)));
  box.x1 = std::min(w - 1, static_cast<int>(std::floor(maxx - 0.5)) + 1);
  box.y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
  box.y1 = std::min(h - 1, static_cast<int>(std::floor(maxy - 0.5)) + 1);
  box.empty = box.x0 > box.x1 || box.y0 > box.y1;
  return box;
}

}  // namespace

ProjectedMesh project_mesh(const Points3& vertices, const FaceMatrix& faces,
                           double f, const Vec2& pp) {
  ProjectedMesh out;
  out.uv.resize(vertices.rows(), 2);
  out.depth.resize(vertices.rows());
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    const Vec3 p = vertices.row(v).transpose();
    const Vec2 uv = project_point(p, f, pp);
    out.uv.row(v) = uv.transpose();
    out.depth[v] = p.z();
  }
  out.faces = &faces;
  return out;
}

SilhouetteRender rasterize_silhouette(const ProjectedMesh& mesh, int width, int height,
                                      const SoftRasterSettings& settings) {
  SilhouetteRender out;
  out.log_omp = Image(width, height, 1, 0.f);
  out.coverage = Image(width, height, 1, 0.f);
  const FaceMatrix& faces = *mesh.faces;
  const double pad = settings.cutoff * settings.sigma + 1.0;

  // Accumulate log(1 - s_f) = -softplus(d/sigma) per pixel; log-space keeps
  // the backward division by (1 - s_f) implicit and stable.
  std::vector<double> log_acc(static_cast<size_t>(width) * height, 0.0);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Vec2 a = mesh.uv.row(faces(f, 0)).transpose();
    const Vec2 b = mesh.uv.row(faces(f, 1)).transpose();
    const Vec2 c = mesh.uv.row(faces(f, 2)).transpose();
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;  // degenerate projected face
    const FaceBox box = face_bbox(a, b, c, pad, width, height);
    if (box.empty) continue;
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        const SignedDist sd = signed_distance(p, a, b, c);
        const double z = sd.d / settings.sigma;
        if (z <= -settings.cutoff) continue;
        log_acc[static_cast<size_t>(y) * width + x] -= softplus(z);
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double L = log_acc[static_cast<size_t>(y) * width + x];
      out.log_omp.at(x, y, 0) = static_cast<float>(L);
      out.coverage.at(x, y, 0) = static_cast<float>(-std::expm1(L));
    }
  }
  return out;
}

void rasterize_silhouette_backward(const ProjectedMesh& mesh, const SilhouetteRender& render,
                                   const Image& grad_coverage, const SoftRasterSettings& settings,
                                   Points2* grad_uv) {
  if (!grad_uv || grad_uv->rows() != mesh.uv.rows())
    throw std::invalid_argument("silhouette backward: grad_uv shape mismatch");
  const FaceMatrix& faces = *mesh.faces;
  const int width = render.coverage.width;
  const int height = render.coverage.height;
  const double pad = settings.cutoff * settings.sigma + 1.0;

  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const int ia = faces(f, 0), ib = faces(f, 1), ic = faces(f, 2);
    const Vec2 a = mesh.uv.row(ia).transpose();
    const Vec2 b = mesh.uv.row(ib).transpose();
    const Vec2 c = mesh.uv.row(ic).transpose();
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const FaceBox box = face_bbox(a, b, c, pad, width, height);
    if (box.empty) continue;
    const int corner[3][2] = {{ia, ib}, {ib, ic}, {ic, ia}};
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const double up = grad_coverage.at(x, y, 0);
        if (up == 0.f) continue;
        const Vec2 p(x + 0.5, y + 0.5);
        const SignedDist sd = signed_distance(p, a, b, c);
        const double z = sd.d / settings.sigma;
        if (z <= -settings.cutoff) continue;
        // dS/dd = prod(1-s) * s / sigma, with prod(1-s) = exp(log_omp).
        const double prod = std::exp(static_cast<double>(render.log_omp.at(x, y, 0)));
        const double s = sigmoid(z);
        const double dS_dd = prod * s / settings.sigma;
        const double scale = up * dS_dd * (sd.d >= 0 ? 1.0 : -1.0);
        // d(dist)/d(edge endpoints): the projection is orthogonal so the
        // parameter's own derivative drops out.
        const Vec2 g = -scale * sd.n;
        const int e0 = corner[sd.edge][0];
        const int e1 = corner[sd.edge][1];
        grad_uv->row(e0) += ((1.0 - sd.t) * g).transpose();
        grad_uv->row(e1) += (sd.t * g).transpose();
      }
    }
  }
}

HardRaster rasterize_hard(const ProjectedMesh& mesh, int width, int height) {
  HardRaster out;
  out.width = width;
  out.height = height;
  out.face.assign(static_cast<size_t>(width) * height, -1);
  out.depth.assign(static_cast<size_t>(width) * height, std::numeric_limits<float>::max());
  out.bary.assign(static_cast<size_t>(width) * height * 3, 0.f);
  const FaceMatrix& faces = *mesh.faces;

  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const int ia = faces(f, 0), ib = faces(f, 1), ic = faces(f, 2);
    const Vec2 a = mesh.uv.row(ia).transpose();
    const Vec2 b = mesh.uv.row(ib).transpose();
    const Vec2 c = mesh.uv.row(ic).transpose();
    double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const FaceBox box = face_bbox(a, b, c, 0.0, width, height);
    if (box.empty) continue;
    const double za = mesh.depth[ia], zb = mesh.depth[ib], zc = mesh.depth[ic];
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        // Affine screen barycentrics.
        double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        // Perspective-correct interpolation recovers the affine weights on
        // the 3D triangle.
        const double inv_z = w0 / za + w1 / zb + w2 / zc;
        const double z = 1.0 / inv_z;
        const size_t i = static_cast<size_t>(y) * width + x;
        if (z >= out.depth[i]) continue;
        out.depth[i] = static_cast<float>(z);
        out.face[i] = static_cast<int>(f);
        out.bary[3 * i + 0] = static_cast<float>(w0 / za * z);
        out.bary[3 * i + 1] = static_cast<float>(w1 / zb * z);
        out.bary[3 * i + 2] = static_cast<float>(w2 / zc * z);
      }
    }
  }
  return out;
}

TexturedRender render_textured(const BodyModel& model, const ProjectedMesh& mesh,
                               const TextureAtlas& atlas, int width, int height,
                               int extend) {
  if (!model.has_uv()) throw std::invalid_argument("render_textured: model has no uv");
  atlas.validate();
  TexturedRender out;
  out.hard = rasterize_hard(mesh, width, height);
  out.color = Image(width, height, 3, 0.f);
  out.covered = Image(width, height, 1, 0.f);

  const int A = atlas.image.width;
  float px[3];
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = static_cast<size_t>(y) * width + x;
      const int f = out.hard.face[i];
      if (f < 0) continue;
      Vec2 uv = Vec2::Zero();
      for (int c = 0; c < 3; ++c)
        uv += static_cast<double>(out.hard.bary[3 * i + c]) * model.uv.row(3 * f + c).transpose();
      sample_bilinear(atlas.image, uv.x() * A, uv.y() * A, px);
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = px[c];
      out.covered.at(x, y, 0) = 1.f;
    }
  }

  // Extend foreground colors a few pixels outward so the soft-composited
  // fringe outside the hard coverage has a foreground to blend with.
  std::vector<uint8_t> filled(out.color.pixel_count());
  for (size_t i = 0; i < filled.size(); ++i) filled[i] = out.hard.face[i] >= 0;
  std::vector<uint8_t> next = filled;
  for (int step = 0; step < extend; ++step) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const size_t i = static_cast<size_t>(y) * width + x;
        if (filled[i]) continue;
        double acc[3] = {0, 0, 0};
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
            const size_t ni = static_cast<size_t>(ny) * width + nx;
            if (!filled[ni]) continue;
            for (int c = 0; c < 3; ++c) acc[c] += out.color.at(nx, ny, c);
            ++n;
          }
        }
        if (n > 0) {
          for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = static_cast<float>(acc[c] / n);
          next[i] = 1;
        }
      }
    }
    filled = next;
  }
  return out;
}

void render_textured_backward_texture(const BodyModel& model, const TexturedRender& render,
                                      const TextureAtlas& atlas, const Image& grad_color,
                                      Image* grad_atlas) {
  if (!grad_atlas || !grad_atlas->same_shape(atlas.image))
    throw std::invalid_argument("texture backward: grad_atlas shape mismatch");
  const int A = atlas.image.width;
  const int width = render.hard.width, height = render.hard.height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = static_cast<size_t>(y) * width + x;
      const int f = render.hard.face[i];
      if (f < 0) continue;
      Vec2 uv = Vec2::Zero();
      for (int c = 0; c < 3; ++c)
        uv += static_cast<double>(render.hard.bary[3 * i + c]) * model.uv.row(3 * f + c).transpose();
      const BilinearTaps taps = bilinear_taps(atlas.image, uv.x() * A, uv.y() * A);
      const int xs[4] = {taps.x0, taps.x1, taps.x0, taps.x1};
      const int ys[4] = {taps.y0, taps.y0, taps.y1, taps.y1};
      const double ws[4] = {taps.w00, taps.w10, taps.w01, taps.w11};
      for (int c = 0; c < 3; ++c) {
        const double up = grad_color.at(x, y, c);
        if (up == 0) continue;
        for (int t = 0; t < 4; ++t)
          grad_atlas->at(xs[t], ys[t], c) += static_cast<float>(up * ws[t]);
      }
    }
  }
}

Image composite(const Image& foreground, const Image& coverage, const Vec3& background) {
  if (foreground.width != coverage.width || foreground.height != coverage.height)
    throw std::invalid_argument("composite: shape mismatch");
  Image out = foreground;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const float s = coverage.at(x, y, 0);
      for (int c = 0; c < out.channels; ++c)
        out.at(x, y, c) = s * foreground.at(x, y, c) + (1.f - s) * static_cast<float>(background[c]);
    }
  }
  return out;
}

Image composite_over_image(const Image& foreground, const Image& coverage, const Image& background) {
  if (!foreground.same_shape(background) || foreground.width != coverage.width ||
      foreground.height != coverage.height)
    throw std::invalid_argument("composite: shape mismatch");
  Image out = foreground;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const float s = coverage.at(x, y, 0);
      for (int c = 0; c < out.channels; ++c)
        out.at(x, y, c) = s * foreground.at(x, y, c) + (1.f - s) * background.at(x, y, c);
    }
  }
  return out;
}

RenderOutput render_scene(const BodyModel& model, const PoseState& state,
                          const CameraParams& cam, const TextureAtlas* atlas,
                          const RenderRequest& req) {
  RenderOutput out;
  const PosedMesh posed = pose_mesh(model, state);
  const double f = effective_focal(cam, state.focal_feature);
  const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, cam.pp);

  const SilhouetteRender sil = rasterize_silhouette(proj, req.width, req.height, req.soft);
  out.silhouette = sil.coverage;

  if (atlas) {
    const TexturedRender tex = render_textured(model, proj, *atlas, req.width, req.height);
    out.hard = tex.hard;
    out.foreground = tex.color;
  } else {
    out.hard = rasterize_hard(proj, req.width, req.height);
    out.foreground = Image(req.width, req.height, 3, 0.5f);
  }
  if (req.background) {
    out.color = composite(out.foreground, out.silhouette, *req.background);
  } else {
    out.color = out.foreground;
  }

  if (req.want_landmarks) {
    const Points3 lm3 = landmarks3d(posed.vertices, model.mesh.faces, model.landmarks);
    out.landmarks = project_points(lm3, f, cam.pp);
    out.landmark_visible = landmark_visibility(lm3, out.landmarks, out.hard);
  }
  return out;
}

Image hard_mask(const HardRaster& hard) {
  Image out(hard.width, hard.height, 1, 0.f);
  for (size_t i = 0; i < hard.face.size(); ++i)
    if (hard.face[i] >= 0) out.data[i] = 1.f;
  return out;
}

UVFlow compute_uvflow(const BodyModel& model, const TexelMap& texel_map,
                      const Points3& posed, const HardRaster& hard,
                      double f, const Vec2& pp, double depth_tol) {
  UVFlow flow(texel_map.size, texel_map.size);
  for (int ty = 0; ty < texel_map.size; ++ty) {
    for (int tx = 0; tx < texel_map.size; ++tx) {
      const size_t i = static_cast<size_t>(ty) * texel_map.size + tx;
      const int face = texel_map.face[i];
      if (face < 0) continue;
      Vec3 p = Vec3::Zero();
      for (int c = 0; c < 3; ++c)
        p += static_cast<double>(texel_map.bary[3 * i + c]) *
             posed.row(model.mesh.faces(face, c)).transpose();
      if (p.z() <= 0) continue;
      const Vec2 uv = project_point(p, f, pp);
      const int px = static_cast<int>(std::floor(uv.x()));
      const int py = static_cast<int>(std::floor(uv.y()));
      if (px < 0 || py < 0 || px >= hard.width || py >= hard.height) continue;
      const size_t hi = static_cast<size_t>(py) * hard.width + px;
      if (hard.face[hi] < 0) continue;
      if (p.z() > hard.depth[hi] * (1.0 + depth_tol)) continue;
      const Vec2 n = pixels_to_normalized(uv.x(), uv.y(), hard.width, hard.height);
      flow.u[i] = static_cast<float>(std::clamp(n.x(), -1.0, 1.0));
      flow.v[i] = static_cast<float>(std::clamp(n.y(), -1.0, 1.0));
      flow.visible[i] = 1;
    }
  }
  return flow;
}

std::vector<uint8_t> landmark_visibility(const Points3& landmarks3d, const Points2& landmarks2d,
                                         const HardRaster& hard, double depth_tol) {
  std::vector<uint8_t> out(landmarks3d.rows(), 0);
  for (Eigen::Index i = 0; i < landmarks3d.rows(); ++i) {
    const int px = static_cast<int>(std::floor(landmarks2d(i, 0)));
    const int py = static_cast<int>(std::floor(landmarks2d(i, 1)));
    if (px < 0 || py < 0 || px >= hard.width || py >= hard.height) continue;
    const size_t hi = static_cast<size_t>(py) * hard.width + px;
    if (hard.face[hi] < 0) continue;
    if (landmarks3d(i, 2) > hard.depth[hi] * (1.0 + depth_tol)) continue;
    out[i] = 1;
  }
  return out;
}

}  // namespace quadfit
