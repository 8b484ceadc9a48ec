#include "quadfit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "quadfit/rotation.hpp"

namespace quadfit {

void LossWeights::validate() const {
  const double all[] = {mask, kp2d, cam, img, pose, trans, shape, uv, tex, dt, photo};
  double sum = 0;
  for (double w : all) {
    if (w < 0) throw std::invalid_argument("loss weights must be non-negative");
    sum += w;
  }
  if (sum <= 0) throw std::invalid_argument("at least one loss weight must be positive");
}

double mask_loss(const Image& gt, const Image& pred, Image* grad_pred) {
  if (!gt.same_shape(pred)) throw std::invalid_argument("mask_loss: shape mismatch");
  const double n = static_cast<double>(pred.data.size());
  if (grad_pred && !grad_pred->same_shape(pred))
    throw std::invalid_argument("mask_loss: grad shape mismatch");
  double sum = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]);
    sum += std::fabs(d);
    if (grad_pred) grad_pred->data[i] += static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n);
  }
  return sum / n;
}

double keypoint_loss(const Points2& gt, const Points2& pred,
                     const std::vector<uint8_t>& visible, Points2* grad_pred) {
  if (gt.rows() != pred.rows()) throw std::invalid_argument("keypoint_loss: count mismatch");
  if (static_cast<Eigen::Index>(visible.size()) != gt.rows())
    throw std::invalid_argument("keypoint_loss: visibility size mismatch");
  int n_vis = 0;
  for (auto v : visible) n_vis += v ? 1 : 0;
  if (n_vis == 0) throw std::invalid_argument("keypoint_loss: no visible keypoints");
  double sum = 0;
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    if (!visible[i]) continue;
    const Vec2 d = (pred.row(i) - gt.row(i)).transpose();
    sum += d.squaredNorm();
    if (grad_pred) grad_pred->row(i) += (2.0 / n_vis) * d.transpose();
  }
  return sum / n_vis;
}

double pose_geodesic_loss(const VecX& theta_gt, const VecX& theta, bool squared, VecX* grad) {
  if (theta_gt.size() != kPoseDim || theta.size() != kPoseDim)
    throw std::invalid_argument("pose_geodesic_loss: pose length must be 105");
  if (grad && grad->size() != kPoseDim)
    throw std::invalid_argument("pose_geodesic_loss: grad size mismatch");
  double sum = 0;
  for (int j = 0; j < kJointCount; ++j) {
    const Mat3 Rg = rodrigues_to_matrix(theta_gt.segment<3>(3 * j));
    RotationWithJacobian rp;
    if (grad)
      rp = rodrigues_to_matrix_with_jacobian(theta.segment<3>(3 * j));
    else
      rp.R = rodrigues_to_matrix(theta.segment<3>(3 * j));
    const double tr = (Rg * rp.R.transpose()).trace();
    const double carg = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    const double angle = std::acos(carg);
    sum += squared ? angle * angle : angle;
    if (grad) {
      // d angle / d R = -Rg / (2 sin angle), elementwise trace pairing.
      const double s = std::sin(angle);
      double dangle_scale;
      if (squared) {
        // d(angle^2)/dtrace-term: 2*angle * (-1 / (2 sin angle)); finite at 0.
        dangle_scale = s > 1e-7 ? -angle / s : -1.0;
      } else {
        if (s < 1e-7) continue;  // flat at 0/pi, leave gradient at zero
        dangle_scale = -0.5 / s;
      }
      for (int c = 0; c < 3; ++c) {
        const Mat3 dR = Eigen::Map<const Mat3>(rp.dR.col(c).data());
        const double dtr = (Rg.array() * dR.array()).sum();
        (*grad)(3 * j + c) += dangle_scale * dtr / kJointCount;
      }
    }
  }
  return sum / kJointCount;
}

namespace {

double l1_with_grad(const Image& target, const Image& pred, Image* grad) {
  double sum = 0;
  const double n = static_cast<double>(pred.data.size());
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    sum += std::fabs(d);
    if (grad) grad->data[i] = static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n);
  }
  return sum / n;
}

}  // namespace

double photometric_loss(const Image& target, const Image& pred, int levels,
                        Image* grad_pred, const Image* mask) {
  if (!target.same_shape(pred)) throw std::invalid_argument("photometric_loss: shape mismatch");
  if (levels < 1) throw std::invalid_argument("photometric_loss: levels must be >= 1");
  Image t = target, p = pred;
  if (mask) {
    if (mask->width != pred.width || mask->height != pred.height)
      throw std::invalid_argument("photometric_loss: mask shape mismatch");
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const float m = mask->at(x, y, 0) > 0.5f ? 1.f : 0.f;
        for (int c = 0; c < p.channels; ++c) {
          t.at(x, y, c) *= m;
          p.at(x, y, c) *= m;
        }
      }
  }

  double total = 0;
  std::vector<Image> pyramid_pred;
  std::vector<Image> pyramid_tgt;
  pyramid_pred.push_back(p);
  pyramid_tgt.push_back(t);
  for (int l = 1; l < levels; ++l) {
    pyramid_pred.push_back(downsample2(pyramid_pred.back()));
    pyramid_tgt.push_back(downsample2(pyramid_tgt.back()));
  }
  std::vector<Image> level_grads(levels);
  for (int l = 0; l < levels; ++l) {
    Image* g = nullptr;
    if (grad_pred) {
      level_grads[l] = Image(pyramid_pred[l].width, pyramid_pred[l].height, pyramid_pred[l].channels);
      g = &level_grads[l];
    }
    total += l1_with_grad(pyramid_tgt[l], pyramid_pred[l], g);
  }
  total /= levels;

  if (grad_pred) {
    if (!grad_pred->same_shape(pred))
      throw std::invalid_argument("photometric_loss: grad shape mismatch");
    // Push every level's gradient back to full resolution through the box
    // pyramid (each coarse pixel distributes evenly over its taps).
    for (int l = levels - 1; l >= 1; --l) {
      Image& coarse = level_grads[l];
      Image& fine = level_grads[l - 1];
      for (int y = 0; y < coarse.height; ++y)
        for (int x = 0; x < coarse.width; ++x) {
          int n = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (2 * x + dx < fine.width && 2 * y + dy < fine.height) ++n;
          for (int c = 0; c < coarse.channels; ++c) {
            const float g = coarse.at(x, y, c) / n;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                if (2 * x + dx < fine.width && 2 * y + dy < fine.height)
                  fine.at(2 * x + dx, 2 * y + dy, c) += g;
          }
        }
    }
    for (size_t i = 0; i < grad_pred->data.size(); ++i) {
      float g = level_grads[0].data[i] / levels;
      if (mask && mask->data[i / pred.channels] <= 0.5f) g = 0.f;
      grad_pred->data[i] += g;
    }
  }
  return total;
}

double uv_loss(const UVFlow& gt, const UVFlow& pred) {
  if (gt.width != pred.width || gt.height != pred.height)
    throw std::invalid_argument("uv_loss: shape mismatch");
  double sum = 0;
  long n = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!gt.visible[i]) continue;
    sum += std::fabs(double(pred.u[i]) - double(gt.u[i])) +
           std::fabs(double(pred.v[i]) - double(gt.v[i]));
    n += 2;
  }
  return n > 0 ? sum / n : 0.0;
}

double tex_loss(const Image& gt, const Image& pred) {
  if (!gt.same_shape(pred)) throw std::invalid_argument("tex_loss: shape mismatch");
  return mean_abs_diff(gt, pred);
}

double dt_loss(const UVFlow& pred, const Image& dt_image, double crop_size) {
  if (crop_size <= 0) throw std::invalid_argument("dt_loss: crop size must be positive");
  double sum = 0;
  long n = 0;
  float value;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!pred.visible[i]) continue;
    const Vec2 p = normalized_to_pixels(pred.u[i], pred.v[i], dt_image.width, dt_image.height);
    sample_bilinear(dt_image, p.x(), p.y(), &value);
    sum += value / crop_size;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

double cam_loss(double f_ref, double f) {
  const double d = f - f_ref;
  return d * d;
}

double trans_loss(const Vec3& ref, const Vec3& t) { return (t - ref).squaredNorm() / 3.0; }

double shape_loss(const VecX& dv_ref, const VecX& dv) {
  if (dv_ref.size() != dv.size()) throw std::invalid_argument("shape_loss: size mismatch");
  if (dv.size() == 0) return 0.0;
  return (dv - dv_ref).squaredNorm() / dv.size();
}

double pck(const Points2& gt, const Points2& pred, const std::vector<uint8_t>& visible,
           double bbox_size, double tau) {
  if (gt.rows() != pred.rows()) throw std::invalid_argument("pck: count mismatch");
  if (bbox_size <= 0) throw std::invalid_argument("pck: bbox size must be positive");
  int n_vis = 0, hits = 0;
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    if (!visible.empty() && !visible[i]) continue;
    ++n_vis;
    const double d = (pred.row(i) - gt.row(i)).norm();
    if (d <= tau * bbox_size) ++hits;
  }
  return n_vis > 0 ? static_cast<double>(hits) / n_vis : 0.0;
}

double iou(const Image& a, const Image& b, bool* empty_union) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("iou: shape mismatch");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.pixel_count(); ++i) {
    const bool pa = a.data[i * a.channels] > 0.5f;
    const bool pb = b.data[i * b.channels] > 0.5f;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (empty_union) *empty_union = uni == 0;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

bool mask_bbox(const Image& mask, double* x0, double* y0, double* x1, double* y1) {
  int minx = mask.width, miny = mask.height, maxx = -1, maxy = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y, 0) > 0.5f) {
        minx = std::min(minx, x);
        miny = std::min(miny, y);
        maxx = std::max(maxx, x);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0) return false;
  *x0 = minx;
  *y0 = miny;
  *x1 = maxx + 1;
  *y1 = maxy + 1;
  return true;
}

double mask_bbox_max_side(const Image& mask) {
  double x0, y0, x1, y1;
  if (!mask_bbox(mask, &x0, &y0, &x1, &y1)) return 0.0;
  return std::max(x1 - x0, y1 - y0);
}

}  // namespace quadfit
