#pragma once

#include <optional>
#include <vector>

#include "quadfit/body_model.hpp"
#include "quadfit/camera.hpp"
#include "quadfit/image.hpp"
#include "quadfit/texture.hpp"

namespace quadfit {

// Soft-rasterization settings. Coverage per pixel is
//   S = 1 - prod_f (1 - sigmoid(d_f / sigma))
// with d_f the signed pixel-to-triangle-boundary distance in pixels
// (positive inside). Face contributions are truncated once
// d < -cutoff * sigma.
struct SoftRasterSettings {
  double sigma = 1.0;
  double cutoff = 14.0;
};

struct SilhouetteRender {
  Image coverage;   // (W, H, 1) soft coverage in [0,1]
  Image log_omp;    // per-pixel log prod (1 - s_f), kept for the backward pass
};

// Projected mesh in pixel coordinates with per-vertex camera depth.
struct ProjectedMesh {
  Points2 uv;      // (V, 2)
  VecX depth;      // (V)
  const FaceMatrix* faces = nullptr;
};
ProjectedMesh project_mesh(const Points3& vertices, const FaceMatrix& faces,
                           double f, const Vec2& pp);

SilhouetteRender rasterize_silhouette(const ProjectedMesh& mesh, int width, int height,
                                      const SoftRasterSettings& settings = {});

// Accumulates d(loss)/d(projected vertex uv) given d(loss)/d(coverage).
// grad_uv must be (V, 2) and is added to.
void rasterize_silhouette_backward(const ProjectedMesh& mesh, const SilhouetteRender& render,
                                   const Image& grad_coverage, const SoftRasterSettings& settings,
                                   Points2* grad_uv);

// Hard z-buffered pass: per-pixel face index, depth and perspective-correct
// barycentric coordinates. Faces are treated as double-sided.
struct HardRaster {
  int width = 0, height = 0;
  std::vector<int> face;      // -1 = background
  std::vector<float> depth;
  std::vector<float> bary;    // 3 per pixel
};
HardRaster rasterize_hard(const ProjectedMesh& mesh, int width, int height);

// Textured render: hard visibility, bilinear texture sampling. Covered
// pixels get the sampled color; uncovered pixels inside `extend` steps of
// coverage get the nearest covered color (so soft-composited fringes have a
// sensible foreground), everything else is zero.
struct TexturedRender {
  Image color;         // (W, H, 3), foreground color (extended)
  Image covered;       // (W, H, 1) hard coverage mask
  HardRaster hard;
};
TexturedRender render_textured(const BodyModel& model, const ProjectedMesh& mesh,
                               const TextureAtlas& atlas, int width, int height,
                               int extend = 4);

// d(loss)/d(atlas texels) from d(loss)/d(rendered color), restricted to hard
// covered pixels. grad_atlas is (A, A, 3), added to.
void render_textured_backward_texture(const BodyModel& model, const TexturedRender& render,
                                      const TextureAtlas& atlas, const Image& grad_color,
                                      Image* grad_atlas);

// out = coverage * foreground + (1 - coverage) * background.
Image composite(const Image& foreground, const Image& coverage, const Vec3& background);
Image composite_over_image(const Image& foreground, const Image& coverage, const Image& background);

// Full render product bundle.
struct RenderOutput {
  Image color;               // composited (or foreground-only if no background)
  Image silhouette;          // soft coverage
  HardRaster hard;           // per-pixel face index pass
  Points2 landmarks;         // projected landmark positions (pixels)
  std::vector<uint8_t> landmark_visible;
  Image foreground;          // extended textured foreground
};

struct RenderRequest {
  int width = 256;
  int height = 256;
  SoftRasterSettings soft;
  std::optional<Vec3> background;  // composite target
  bool want_landmarks = true;
};

RenderOutput render_scene(const BodyModel& model, const PoseState& state,
                          const CameraParams& cam, const TextureAtlas* atlas,
                          const RenderRequest& req);

// Hard mask (1 where a face is visible) from a hard pass.
Image hard_mask(const HardRaster& hard);

// Ground-truth uv-flow: maps every textel through its face to image
// coordinates; marks textels visible when their surface point passes the
// z-buffer test (depth within `depth_tol` relative) and lands inside the
// image.
UVFlow compute_uvflow(const BodyModel& model, const TexelMap& texel_map,
                      const Points3& posed, const HardRaster& hard,
                      double f, const Vec2& pp, double depth_tol = 5e-3);

// Landmark visibility by comparing landmark depth against the z-buffer.
std::vector<uint8_t> landmark_visibility(const Points3& landmarks3d, const Points2& landmarks2d,
                                         const HardRaster& hard, double depth_tol = 5e-3);

}  // namespace quadfit
