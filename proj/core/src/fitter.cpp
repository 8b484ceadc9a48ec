#include "quadfit/fitter.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <thread>

#include "quadfit/png_io.hpp"

namespace quadfit {

namespace fs = std::filesystem;

FitConfig FitConfig::defaults() {
  FitConfig c;
  FitStage coarse;
  coarse.name = "trans_focal";
  coarse.iters = 120;
  coarse.lr = 0.05;
  coarse.opt_trans = true;
  coarse.opt_focal = true;
  coarse.w_kp2d = 10.0;
  coarse.torso_only = true;
  FitStage pose;
  pose.name = "pose";
  pose.iters = 250;
  pose.lr = 0.02;
  pose.opt_pose = true;
  pose.opt_trans = true;
  pose.opt_focal = true;
  pose.w_kp2d = 10.0;
  pose.w_pose_prior = 0.2;
  FitStage shape;
  shape.name = "shape_mask";
  shape.iters = 120;
  shape.lr = 0.01;
  shape.opt_pose = true;
  shape.opt_trans = true;
  shape.opt_focal = true;
  shape.opt_shape = true;
  shape.w_kp2d = 10.0;
  shape.w_mask = 1.0;
  shape.w_pose_prior = 0.2;
  shape.w_shape_reg = 0.02;
  c.stages = {coarse, pose, shape};
  return c;
}

void FitConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("fit config: no stages");
  for (const auto& s : stages) {
    if (s.iters <= 0) throw std::invalid_argument("fit config: stage iters must be positive");
    if (s.lr <= 0) throw std::invalid_argument("fit config: stage lr must be positive");
    if (s.w_kp2d < 0 || s.w_mask < 0 || s.w_pose_prior < 0 || s.w_shape_reg < 0)
      throw std::invalid_argument("fit config: stage weights must be non-negative");
  }
  if (refine.iters <= 0) throw std::invalid_argument("fit config: refine iters must be positive");
  if (refine.lr <= 0) throw std::invalid_argument("fit config: refine lr must be positive");
  if (render_size < 16) throw std::invalid_argument("fit config: render size too small");
  if (sigma <= 0) throw std::invalid_argument("fit config: sigma must be positive");
}

PosePrior PosePrior::from_gaussian(const PoseGaussian& g) {
  PosePrior p;
  p.mean = g.mean;
  p.precision = Eigen::LLT<MatX>(g.cov).solve(MatX::Identity(g.cov.rows(), g.cov.cols()));
  return p;
}

PosePrior PosePrior::l2(double scale) {
  PosePrior p;
  p.mean = VecX::Zero(kPoseDim);
  p.precision = scale * MatX::Identity(kPoseDim, kPoseDim);
  return p;
}

double PosePrior::evaluate(const VecX& theta, VecX* grad) const {
  const VecX d = theta - mean;
  const VecX pd = precision * d;
  if (grad) *grad += pd / kPoseDim;
  return 0.5 * d.dot(pd) / kPoseDim;
}

namespace {

struct ParamLayout {
  int feature_dim;
  int size() const { return kPoseDim + 3 + 1 + feature_dim; }
  int theta0() const { return 0; }
  int trans0() const { return kPoseDim; }
  int focal() const { return kPoseDim + 3; }
  int shape0() const { return kPoseDim + 4; }
};

VecX pack_state(const PoseState& state, const CameraParams& cam, const ParamLayout& lay) {
  VecX p(lay.size());
  p.segment(lay.theta0(), kPoseDim) = state.theta;
  p.segment<3>(lay.trans0()) = raw_from_translation(state.gamma, cam.gamma_z0);
  p[lay.focal()] = state.focal_feature;
  p.segment(lay.shape0(), lay.feature_dim) = state.shape_features;
  return p;
}

PoseState unpack_state(const VecX& p, const CameraParams& cam, const ParamLayout& lay) {
  PoseState s;
  s.theta = p.segment(lay.theta0(), kPoseDim);
  s.gamma = effective_translation(p.segment<3>(lay.trans0()), cam.gamma_z0);
  s.focal_feature = p[lay.focal()];
  s.shape_features = p.segment(lay.shape0(), lay.feature_dim);
  return s;
}

void clamp_params(VecX& p, const CameraParams& cam, const FitConfig& config,
                  const ParamLayout& lay) {
  const double min_z = config.min_depth - 1.0 - cam.gamma_z0;
  p[lay.trans0() + 2] = std::max(p[lay.trans0() + 2], min_z);
  if (cam.f1 > 0) {
    const double min_x = (config.min_focal - cam.f0) / cam.f1;
    p[lay.focal()] = std::max(p[lay.focal()], min_x);
  }
}

struct TermGrads {
  VecX vert;   // (3K) gradient w.r.t. posed subset vertices
  double focal = 0;
  std::vector<int> map;  // vertex id -> subset row (-1 when absent)
};

// Folds a screen-space gradient at one vertex into 3D/focal gradients.
void fold_uv_grad(const Vec3& point, double f, double f1, const Vec2& g_uv, Vec3* g_point,
                  double* g_x) {
  const double iz = 1.0 / point.z();
  (*g_point).x() += g_uv.x() * f * iz;
  (*g_point).y() += g_uv.y() * f * iz;
  (*g_point).z() += -f * iz * iz * (g_uv.x() * point.x() + g_uv.y() * point.y());
  *g_x += f1 * iz * (g_uv.x() * point.x() + g_uv.y() * point.y());
}

struct StageObjective {
  double loss = 0;
  VecX grad;
};

// Shared objective machinery for the staged supervised fit.
StageObjective evaluate_stage(const BodyModel& model, const VecX& params, const FitInput& input,
                              const FitStage& stage, const FitConfig& config,
                              const PosePrior& prior, const ParamLayout& lay) {
  StageObjective out;
  out.grad = VecX::Zero(lay.size());
  const CameraParams& cam = input.camera;
  const PoseState state = unpack_state(params, cam, lay);
  const double f = effective_focal(cam, state.focal_feature);
  const double norm_scale = std::max(cam.width, cam.height);

  const bool need_mask = stage.w_mask > 0 && input.mask.has_value();
  std::vector<int> subset = need_mask ? std::vector<int>() : landmark_vertex_set(model);

  PoseJacobianRequest req;
  req.theta = stage.opt_pose;
  req.gamma = stage.opt_trans;
  req.shape = stage.opt_shape;
  const PoseJacobians jac = pose_jacobians(model, state, subset, req);
  const int K = static_cast<int>(jac.vertex_subset.size());
  std::vector<int> vmap(model.vertex_count(), -1);
  for (int k = 0; k < K; ++k) vmap[jac.vertex_subset[k]] = k;

  const PosedMesh posed = pose_mesh(model, state);
  VecX g_vert = VecX::Zero(3 * K);
  double g_x = 0;

  // Keypoint term.
  if (stage.w_kp2d > 0) {
    const Points3 lm3 = landmarks3d(posed.vertices, model.mesh.faces, model.landmarks);
    Points2 pred_norm(lm3.rows(), 2);
    for (Eigen::Index i = 0; i < lm3.rows(); ++i)
      pred_norm.row(i) =
          project_point(lm3.row(i).transpose(), f, cam.pp).transpose() / norm_scale;
    Points2 gt_norm = input.keypoints / norm_scale;
    std::vector<uint8_t> vis = input.keypoint_visible;
    if (stage.torso_only) {
      std::vector<uint8_t> torso(vis.size(), 0);
      for (int idx : config.torso_keypoints)
        if (idx >= 0 && idx < static_cast<int>(vis.size())) torso[idx] = vis[idx];
      vis = torso;
    }
    Points2 g_pred = Points2::Zero(lm3.rows(), 2);
    const double kp = keypoint_loss(gt_norm, pred_norm, vis, &g_pred);
    out.loss += stage.w_kp2d * kp;
    for (Eigen::Index i = 0; i < lm3.rows(); ++i) {
      if (!vis[i]) continue;
      const Vec2 g_uv = stage.w_kp2d * g_pred.row(i).transpose() / norm_scale;
      const Vec3 point = lm3.row(i).transpose();
      Vec3 g_point = Vec3::Zero();
      fold_uv_grad(point, f, cam.f1, g_uv, &g_point, &g_x);
      const auto& e = model.landmarks.entries[i];
      for (int c = 0; c < 3; ++c) {
        const int row = vmap[model.mesh.faces(e.face, c)];
        g_vert.segment<3>(3 * row) += e.weights[c] * g_point;
      }
    }
  }

  // Mask term through the soft rasterizer.
  if (need_mask) {
    const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, cam.pp);
    SoftRasterSettings soft;
    soft.sigma = config.sigma;
    const SilhouetteRender sil = rasterize_silhouette(proj, cam.width, cam.height, soft);
    Image g_cov(cam.width, cam.height, 1);
    const double m = mask_loss(*input.mask, sil.coverage, &g_cov);
    out.loss += stage.w_mask * m;
    for (auto& v : g_cov.data) v *= static_cast<float>(stage.w_mask);
    Points2 g_uv = Points2::Zero(model.vertex_count(), 2);
    rasterize_silhouette_backward(proj, sil, g_cov, soft, &g_uv);
    for (int v = 0; v < model.vertex_count(); ++v) {
      const Vec2 g = g_uv.row(v).transpose();
      if (g.x() == 0 && g.y() == 0) continue;
      Vec3 g_point = Vec3::Zero();
      fold_uv_grad(posed.vertices.row(v).transpose(), f, cam.f1, g, &g_point, &g_x);
      g_vert.segment<3>(3 * vmap[v]) += g_point;
    }
  }

  // Chain vertex gradients into the parameterization.
  if (stage.opt_pose)
    out.grad.segment(lay.theta0(), kPoseDim) += jac.d_theta.transpose() * g_vert;
  if (stage.opt_trans) out.grad.segment<3>(lay.trans0()) += jac.d_gamma.transpose() * g_vert;
  if (stage.opt_shape)
    out.grad.segment(lay.shape0(), lay.feature_dim) += jac.d_shape.transpose() * g_vert;
  if (stage.opt_focal) out.grad[lay.focal()] += g_x;

  if (stage.w_pose_prior > 0) {
    VecX gp = VecX::Zero(kPoseDim);
    const double pl = prior.evaluate(state.theta, &gp);
    out.loss += stage.w_pose_prior * pl;
    if (stage.opt_pose) out.grad.segment(lay.theta0(), kPoseDim) += stage.w_pose_prior * gp;
  }
  if (stage.w_shape_reg > 0 && lay.feature_dim > 0) {
    const VecX& fs = state.shape_features;
    out.loss += stage.w_shape_reg * fs.squaredNorm() / lay.feature_dim;
    if (stage.opt_shape)
      out.grad.segment(lay.shape0(), lay.feature_dim) +=
          stage.w_shape_reg * 2.0 * fs / lay.feature_dim;
  }
  return out;
}

std::vector<int> active_indices(const FitStage& stage, const ParamLayout& lay) {
  std::vector<int> idx;
  if (stage.opt_pose)
    for (int i = 0; i < kPoseDim; ++i) idx.push_back(lay.theta0() + i);
  if (stage.opt_trans)
    for (int i = 0; i < 3; ++i) idx.push_back(lay.trans0() + i);
  if (stage.opt_focal) idx.push_back(lay.focal());
  if (stage.opt_shape)
    for (int i = 0; i < lay.feature_dim; ++i) idx.push_back(lay.shape0() + i);
  return idx;
}

}  // namespace

FitResult fit_supervised(const FitInput& input, const BodyModel& model, const FitConfig& config,
                         const PosePrior* prior, const PoseState* init) {
  config.validate();
  input.camera.validate();
  int n_vis = 0;
  for (auto v : input.keypoint_visible) n_vis += v ? 1 : 0;
  if (input.keypoints.rows() != kLandmarkCount ||
      static_cast<int>(input.keypoint_visible.size()) != kLandmarkCount)
    throw std::invalid_argument("fit_supervised: expected 28 keypoints with visibility");
  if (n_vis < 6) throw std::invalid_argument("fit_supervised: needs at least 6 visible keypoints");
  if (input.mask && (input.mask->width != input.camera.width ||
                     input.mask->height != input.camera.height))
    throw std::invalid_argument("fit_supervised: mask size must match the camera frame");

  const auto t0 = std::chrono::steady_clock::now();
  const ParamLayout lay{model.feature_dim()};
  const PosePrior fallback = PosePrior::l2(config.prior_l2_weight);
  const PosePrior& the_prior = prior ? *prior : fallback;

  PoseState start = init ? *init : PoseState::rest(model);
  if (!init) start.gamma = effective_translation(Vec3::Zero(), input.camera.gamma_z0);
  VecX params = pack_state(start, input.camera, lay);
  clamp_params(params, input.camera, config, lay);

  FitResult result;
  for (const auto& stage : config.stages) {
    const std::vector<int> idx = active_indices(stage, lay);
    AdamParams hyper = config.adam;
    hyper.lr = stage.lr;
    AdamState adam(static_cast<Eigen::Index>(idx.size()));
    std::vector<double> trace;
    trace.reserve(stage.iters + 1);
    VecX best_params = params;
    double best = std::numeric_limits<double>::max();
    for (int it = 0; it < stage.iters; ++it) {
      const StageObjective obj =
          evaluate_stage(model, params, input, stage, config, the_prior, lay);
      trace.push_back(obj.loss);
      if (obj.loss < best) {
        best = obj.loss;
        best_params = params;
      }
      if (idx.empty()) break;
      VecX g(idx.size()), p(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        g[i] = obj.grad[idx[i]];
        p[i] = params[idx[i]];
      }
      adam_step(adam, p, g, hyper);
      for (size_t i = 0; i < idx.size(); ++i) params[idx[i]] = p[i];
      clamp_params(params, input.camera, config, lay);
    }
    // Evaluate the last iterate too, then keep the stage's best.
    const StageObjective last = evaluate_stage(model, params, input, stage, config, the_prior, lay);
    trace.push_back(last.loss);
    if (last.loss < best) {
      best = last.loss;
      best_params = params;
    }
    params = best_params;
    result.stage_traces.push_back(std::move(trace));
    result.final_loss = best;
  }

  result.state = unpack_state(params, input.camera, lay).canonicalized();
  result.best_loss = result.final_loss;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

FitResult refine_photometric(const Image& image, const PoseState& init, const TextureAtlas& atlas,
                             const Vec3& background, const BodyModel& model,
                             const CameraParams& camera, const FitConfig& config,
                             TextureAtlas* refined_atlas) {
  config.validate();
  if (atlas.image.width == 0) throw std::invalid_argument("refine: missing texture atlas");
  atlas.validate();
  if (image.width != camera.width || image.height != camera.height || image.channels != 3)
    throw std::invalid_argument("refine: image must match the camera frame");
  if (init.shape_features.size() != model.feature_dim())
    throw std::invalid_argument("refine: init state does not match the model");

  const auto t0 = std::chrono::steady_clock::now();
  const ParamLayout lay{model.feature_dim()};
  const RefineSettings& rs = config.refine;
  const double f_anchor = effective_focal(camera, init.focal_feature);
  const Vec3 gamma_anchor = init.gamma;

  FitStage vars;  // reuse the variable-mask plumbing
  vars.opt_pose = rs.opt_pose;
  vars.opt_trans = rs.opt_trans;
  vars.opt_focal = rs.opt_focal;
  vars.opt_shape = rs.opt_shape;
  const std::vector<int> idx = active_indices(vars, lay);

  VecX params = pack_state(init, camera, lay);
  clamp_params(params, camera, config, lay);
  TextureAtlas tex = atlas;

  AdamParams hyper = config.adam;
  hyper.lr = rs.lr;
  AdamState adam(static_cast<Eigen::Index>(idx.size()));
  AdamParams tex_hyper = config.adam;
  tex_hyper.lr = rs.texture_lr;
  AdamState tex_adam;
  VecX tex_params;
  if (rs.opt_texture) {
    tex_params.resize(tex.image.data.size());
    for (size_t i = 0; i < tex.image.data.size(); ++i) tex_params[i] = tex.image.data[i];
    tex_adam = AdamState(tex_params.size());
  }

  FitResult result;
  VecX best_params = params;
  TextureAtlas best_tex = tex;
  double best_photo = std::numeric_limits<double>::max();
  double first_photo = 0;

  for (int it = 0; it <= rs.iters; ++it) {
    const PoseState state = unpack_state(params, camera, lay);
    const double f = effective_focal(camera, state.focal_feature);
    const PosedMesh posed = pose_mesh(model, state);
    const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, camera.pp);
    SoftRasterSettings soft;
    soft.sigma = config.sigma;
    const SilhouetteRender sil = rasterize_silhouette(proj, camera.width, camera.height, soft);
    const TexturedRender fg = render_textured(model, proj, tex, camera.width, camera.height);
    const Image composited = composite(fg.color, sil.coverage, background);

    Image g_comp(camera.width, camera.height, 3);
    const double photo = photometric_loss(image, composited, rs.photo_levels, &g_comp);
    const double c_term = rs.w_cam * cam_loss(f_anchor, f);
    const double t_term = rs.w_trans * trans_loss(gamma_anchor, state.gamma);
    const double total = rs.w_photo * photo + c_term + t_term;
    result.refine_trace.push_back(total);
    if (it == 0) first_photo = photo;
    if (photo < best_photo) {
      best_photo = photo;
      best_params = params;
      result.best_iter = it;
      if (rs.opt_texture) best_tex = tex;
    }
    if (it == rs.iters) break;

    // d out / d coverage = fg - bg ; d out / d fg = coverage.
    Image g_cov(camera.width, camera.height, 1);
    Image g_fg(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y)
      for (int x = 0; x < camera.width; ++x) {
        double acc = 0;
        const float s = sil.coverage.at(x, y, 0);
        for (int c = 0; c < 3; ++c) {
          const double gc = rs.w_photo * g_comp.at(x, y, c);
          acc += gc * (fg.color.at(x, y, c) - background[c]);
          g_fg.at(x, y, c) = static_cast<float>(gc * s);
        }
        g_cov.at(x, y, 0) = static_cast<float>(acc);
      }

    Points2 g_uv = Points2::Zero(model.vertex_count(), 2);
    rasterize_silhouette_backward(proj, sil, g_cov, soft, &g_uv);
    VecX g_vert = VecX::Zero(3 * model.vertex_count());
    double g_x = 0;
    for (int v = 0; v < model.vertex_count(); ++v) {
      const Vec2 g = g_uv.row(v).transpose();
      if (g.x() == 0 && g.y() == 0) continue;
      Vec3 g_point = Vec3::Zero();
      fold_uv_grad(posed.vertices.row(v).transpose(), f, camera.f1, g, &g_point, &g_x);
      g_vert.segment<3>(3 * v) = g_point;
    }

    PoseJacobianRequest req;
    req.theta = rs.opt_pose;
    req.gamma = rs.opt_trans;
    req.shape = rs.opt_shape;
    const PoseJacobians jac = pose_jacobians(model, state, {}, req);

    VecX grad = VecX::Zero(lay.size());
    if (rs.opt_pose) grad.segment(lay.theta0(), kPoseDim) = jac.d_theta.transpose() * g_vert;
    if (rs.opt_trans)
      grad.segment<3>(lay.trans0()) = jac.d_gamma.transpose() * g_vert +
                                      rs.w_trans * 2.0 / 3.0 * (state.gamma - gamma_anchor);
    if (rs.opt_shape)
      grad.segment(lay.shape0(), lay.feature_dim) = jac.d_shape.transpose() * g_vert;
    if (rs.opt_focal) grad[lay.focal()] = g_x + rs.w_cam * 2.0 * (f - f_anchor) * camera.f1;

    if (!idx.empty()) {
      VecX g(idx.size()), p(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        g[i] = grad[idx[i]];
        p[i] = params[idx[i]];
      }
      adam_step(adam, p, g, hyper);
      for (size_t i = 0; i < idx.size(); ++i) params[idx[i]] = p[i];
      clamp_params(params, camera, config, lay);
    }
    if (rs.opt_texture) {
      Image g_atlas(tex.image.width, tex.image.height, 3);
      render_textured_backward_texture(model, fg, tex, g_fg, &g_atlas);
      VecX g_tex(tex_params.size());
      for (size_t i = 0; i < g_atlas.data.size(); ++i) g_tex[i] = g_atlas.data[i];
      adam_step(tex_adam, tex_params, g_tex, tex_hyper);
      for (size_t i = 0; i < tex.image.data.size(); ++i)
        tex.image.data[i] = std::clamp(static_cast<float>(tex_params[i]), 0.f, 1.f);
    }
  }

  result.state = unpack_state(best_params, camera, lay).canonicalized();
  result.best_loss = best_photo;
  result.final_loss = result.refine_trace.back();
  result.low_confidence =
      (first_photo - best_photo) < rs.min_rel_improvement * std::max(first_photo, 1e-12);
  if (refined_atlas) *refined_atlas = rs.opt_texture ? best_tex : tex;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Vec3 estimate_background_color(const Image& image, const Image* mask) {
  const int pw = std::max(1, image.width / 8);
  const int ph = std::max(1, image.height / 8);
  Vec3 sum = Vec3::Zero();
  long n = 0;
  auto accumulate = [&](int x0, int y0) {
    for (int y = y0; y < y0 + ph; ++y)
      for (int x = x0; x < x0 + pw; ++x) {
        if (mask && mask->at(x, y, 0) > 0.5f) continue;
        for (int c = 0; c < std::min(3, image.channels); ++c) sum[c] += image.at(x, y, c);
        ++n;
      }
  };
  accumulate(0, 0);
  accumulate(image.width - pw, 0);
  accumulate(0, image.height - ph);
  accumulate(image.width - pw, image.height - ph);
  if (n == 0) return Vec3(0.5, 0.5, 0.5);
  return sum / static_cast<double>(n);
}

SampleFitSetup prepare_sample_fit(const AnnotationRecord& record, const std::string& dataset_dir,
                                  const BodyModel& model, int crop_size, double margin) {
  SampleFitSetup out;
  const Image frame = read_png((fs::path(dataset_dir) / record.image_path).string());
  const Image mask = read_png((fs::path(dataset_dir) / record.mask_path).string());

  double x0, y0, x1, y1;
  if (!mask_bbox(mask, &x0, &y0, &x1, &y1))
    throw std::runtime_error("prepare_sample_fit: empty ground-truth mask");
  const double side = std::max(x1 - x0, y1 - y0) * (1.0 + 2.0 * margin);
  const Vec2 center(0.5 * (x0 + x1), 0.5 * (y0 + y1));
  out.crop.origin = center - Vec2(side / 2, side / 2);
  out.crop.size = side;
  out.crop.out_size = crop_size;

  out.image_crop = crop_resize(frame, out.crop.origin.x(), out.crop.origin.y(), side, crop_size);
  Image mask_crop = crop_resize(mask, out.crop.origin.x(), out.crop.origin.y(), side, crop_size);
  for (auto& v : mask_crop.data) v = v > 0.5f ? 1.f : 0.f;
  out.mask_crop = std::move(mask_crop);
  out.mask_full = mask;

  out.full_camera = record.camera;
  out.input.camera = apply_crop(record.camera, out.crop);
  out.input.keypoints.resize(record.keypoints.rows(), 2);
  for (Eigen::Index i = 0; i < record.keypoints.rows(); ++i)
    out.input.keypoints.row(i) =
        crop_point(record.keypoints.row(i).transpose(), out.crop).transpose();
  out.input.keypoint_visible = record.keypoint_visible;
  out.input.mask = out.mask_crop;

  out.gt_state.theta = record.scene.theta;
  out.gt_state.gamma = record.scene.gamma;
  // The crop scales f0 and f1 together, so the focal feature is unchanged.
  out.gt_state.focal_feature = (record.scene.focal - record.camera.f0) / record.camera.f1;
  out.gt_state.shape_features = record.scene.shape_features;
  if (out.gt_state.shape_features.size() != model.feature_dim())
    throw std::runtime_error("prepare_sample_fit: annotation does not match the model");
  return out;
}

PoseState perturb_state(const PoseState& gt, double pose_sigma, double depth_frac,
                        double focal_frac, const CameraParams& cam, Rng& rng) {
  PoseState out = gt;
  for (Eigen::Index i = 0; i < out.theta.size(); ++i) out.theta[i] += pose_sigma * rng.normal();
  out.gamma.z() *= 1.0 + depth_frac * rng.uniform(-1.0, 1.0);
  const double f = effective_focal(cam, gt.focal_feature);
  const double f_new = f * (1.0 + focal_frac * rng.uniform(-1.0, 1.0));
  out.focal_feature = (f_new - cam.f0) / cam.f1;
  return out;
}

FitMetrics evaluate_fit(const BodyModel& model, const PoseState& state,
                        const CameraParams& camera, const Points2& gt_keypoints,
                        const std::vector<uint8_t>& gt_visible, const Image* gt_mask) {
  FitMetrics m;
  const PosedMesh posed = pose_mesh(model, state);
  const double f = effective_focal(camera, state.focal_feature);
  const Points3 lm3 = landmarks3d(posed.vertices, model.mesh.faces, model.landmarks);
  const Points2 pred = project_points(lm3, f, camera.pp);

  double bbox = 0;
  if (gt_mask) bbox = mask_bbox_max_side(*gt_mask);
  if (bbox <= 0) {
    // Fall back to the ground-truth keypoint bbox.
    double minx = 1e18, miny = 1e18, maxx = -1e18, maxy = -1e18;
    for (Eigen::Index i = 0; i < gt_keypoints.rows(); ++i) {
      if (!gt_visible.empty() && !gt_visible[i]) continue;
      minx = std::min(minx, gt_keypoints(i, 0));
      maxx = std::max(maxx, gt_keypoints(i, 0));
      miny = std::min(miny, gt_keypoints(i, 1));
      maxy = std::max(maxy, gt_keypoints(i, 1));
    }
    bbox = std::max(maxx - minx, maxy - miny);
  }
  if (bbox > 0) {
    m.pck05 = pck(gt_keypoints, pred, gt_visible, bbox, 0.05);
    m.pck10 = pck(gt_keypoints, pred, gt_visible, bbox, 0.10);
    m.has_pck = true;
  }
  if (gt_mask) {
    const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, camera.pp);
    const Image pred_mask = hard_mask(rasterize_hard(proj, camera.width, camera.height));
    m.iou = iou(*gt_mask, pred_mask);
    m.has_iou = true;
  }
  return m;
}

BatchResult batch_fit(const std::string& dataset_dir, const BodyModel& model,
                      const FitConfig& config, const PosePrior* prior, const BatchOptions& options,
                      std::vector<FitResult>* results, std::vector<PoseState>* states) {
  const std::vector<std::string> annots = list_dataset_annotations(dataset_dir);
  BatchResult out;
  out.rows.resize(annots.size());
  if (results) results->resize(annots.size());
  if (states) states->resize(annots.size());

  std::atomic<size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = cursor.fetch_add(1);
      if (i >= annots.size()) break;
      BatchRow& row = out.rows[i];
      try {
        const AnnotationRecord record = read_annotation(annots[i]);
        row.id = record.id;
        SampleFitSetup setup = prepare_sample_fit(record, dataset_dir, model);
        if (!options.use_mask) setup.input.mask.reset();
        PoseState init;
        if (options.init_from_gt) {
          Rng rng(Rng::mix(options.seed, static_cast<uint64_t>(record.id)));
          init = perturb_state(setup.gt_state, options.pose_sigma, options.depth_frac,
                               options.focal_frac, setup.input.camera, rng);
        } else {
          init = PoseState::rest(model);
          init.gamma = effective_translation(Vec3::Zero(), setup.input.camera.gamma_z0);
        }
        FitResult fit = fit_supervised(setup.input, model, config, prior, &init);
        // Metrics in the full dataset frame (the crop-invariant state renders
        // under the original camera directly).
        fit.metrics = evaluate_fit(model, fit.state, record.camera, record.keypoints,
                                   record.keypoint_visible, &setup.mask_full);
        row.metrics = fit.metrics;
        row.final_loss = fit.final_loss;
        row.ok = true;
        if (results) (*results)[i] = fit;
        if (states) (*states)[i] = fit.state;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  };
  if (options.jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < options.jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& row : out.rows) {
    if (!row.ok) continue;
    ++out.n_ok;
    out.mean_pck05 += row.metrics.pck05;
    out.mean_pck10 += row.metrics.pck10;
    out.mean_iou += row.metrics.iou;
  }
  if (out.n_ok > 0) {
    out.mean_pck05 /= out.n_ok;
    out.mean_pck10 /= out.n_ok;
    out.mean_iou /= out.n_ok;
  }
  return out;
}

}  // namespace quadfit
