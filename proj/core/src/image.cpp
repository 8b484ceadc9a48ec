#include "quadfit/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace quadfit {

BilinearTaps bilinear_taps(const Image& img, double x, double y) {
  BilinearTaps t{};
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  double x0f = std::floor(fx);
  double y0f = std::floor(fy);
  double ax = fx - x0f;
  double ay = fy - y0f;
  int x0 = static_cast<int>(x0f);
  int y0 = static_cast<int>(y0f);
  int x1 = x0 + 1;
  int y1 = y0 + 1;
  t.clamped_x = x0 < 0 || x1 > img.width - 1;
  t.clamped_y = y0 < 0 || y1 > img.height - 1;
  x0 = std::clamp(x0, 0, img.width - 1);
  x1 = std::clamp(x1, 0, img.width - 1);
  y0 = std::clamp(y0, 0, img.height - 1);
  y1 = std::clamp(y1, 0, img.height - 1);
  t.x0 = x0;
  t.x1 = x1;
  t.y0 = y0;
  t.y1 = y1;
  t.w00 = (1 - ax) * (1 - ay);
  t.w10 = ax * (1 - ay);
  t.w01 = (1 - ax) * ay;
  t.w11 = ax * ay;
  // Weight derivatives vanish where the sample is clamped off the edge.
  const double gx = t.clamped_x ? 0.0 : 1.0;
  const double gy = t.clamped_y ? 0.0 : 1.0;
  t.dwx[0] = -gx * (1 - ay);
  t.dwx[1] = gx * (1 - ay);
  t.dwx[2] = -gx * ay;
  t.dwx[3] = gx * ay;
  t.dwy[0] = -gy * (1 - ax);
  t.dwy[1] = -gy * ax;
  t.dwy[2] = gy * (1 - ax);
  t.dwy[3] = gy * ax;
  return t;
}

void sample_bilinear(const Image& img, double x, double y, float* out) {
  const BilinearTaps t = bilinear_taps(img, x, y);
  for (int c = 0; c < img.channels; ++c) {
    out[c] = static_cast<float>(t.w00 * img.at(t.x0, t.y0, c) +
                                t.w10 * img.at(t.x1, t.y0, c) +
                                t.w01 * img.at(t.x0, t.y1, c) +
                                t.w11 * img.at(t.x1, t.y1, c));
  }
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  Image out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  std::vector<float> px(img.channels);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      sample_bilinear(img, (x + 0.5) * sx, (y + 0.5) * sy, px.data());
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = px[c];
    }
  }
  return out;
}

Image downsample2(const Image& img) {
  const int w = (img.width + 1) / 2;
  const int h = (img.height + 1) / 2;
  Image out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int sx = 2 * x + dx;
            const int sy = 2 * y + dy;
            if (sx < img.width && sy < img.height) {
              sum += img.at(sx, sy, c);
              ++n;
            }
          }
        }
        out.at(x, y, c) = static_cast<float>(sum / n);
      }
    }
  }
  return out;
}

Image crop_resize(const Image& img, double x0, double y0, double size, int out_size) {
  if (size <= 0 || out_size <= 0) throw std::invalid_argument("crop_resize: non-positive size");
  Image out(out_size, out_size, img.channels);
  const double s = size / out_size;
  std::vector<float> px(img.channels);
  for (int y = 0; y < out_size; ++y) {
    for (int x = 0; x < out_size; ++x) {
      sample_bilinear(img, x0 + (x + 0.5) * s, y0 + (y + 0.5) * s, px.data());
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = px[c];
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

void rgb_to_hsv(float r, float g, float b, float* h, float* s, float* v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  *v = mx;
  *s = mx > 0 ? d / mx : 0.f;
  if (d <= 0) {
    *h = 0.f;
    return;
  }
  float hh;
  if (mx == r)
    hh = std::fmod((g - b) / d, 6.f);
  else if (mx == g)
    hh = (b - r) / d + 2.f;
  else
    hh = (r - g) / d + 4.f;
  hh /= 6.f;
  if (hh < 0) hh += 1.f;
  *h = hh;
}

void hsv_to_rgb(float h, float s, float v, float* r, float* g, float* b) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.f;
  const float x = c * (1.f - std::fabs(std::fmod(hp, 2.f) - 1.f));
  float rr = 0, gg = 0, bb = 0;
  if (hp < 1) {
    rr = c; gg = x;
  } else if (hp < 2) {
    rr = x; gg = c;
  } else if (hp < 3) {
    gg = c; bb = x;
  } else if (hp < 4) {
    gg = x; bb = c;
  } else if (hp < 5) {
    rr = x; bb = c;
  } else {
    rr = c; bb = x;
  }
  const float m = v - c;
  *r = rr + m;
  *g = gg + m;
  *b = bb + m;
}

Image adjust_hsv(const Image& img, double hue_shift, double sat_scale, double val_scale) {
  if (img.channels != 3) throw std::invalid_argument("adjust_hsv: expects RGB");
  Image out = img;
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    float* p = &out.data[i * 3];
    float h, s, v;
    rgb_to_hsv(p[0], p[1], p[2], &h, &s, &v);
    h = static_cast<float>(h + hue_shift);
    s = std::clamp(static_cast<float>(s * sat_scale), 0.f, 1.f);
    v = std::clamp(static_cast<float>(v * val_scale), 0.f, 1.f);
    hsv_to_rgb(h, s, v, &p[0], &p[1], &p[2]);
    for (int c = 0; c < 3; ++c) p[c] = std::clamp(p[c], 0.f, 1.f);
  }
  return out;
}

namespace {

// 1D squared distance transform of sampled function f (Felzenszwalb-Huttenlocher).
void dt1d(const std::vector<double>& f, std::vector<double>& out,
          std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

Image distance_transform(const Image& mask) {
  if (mask.channels != 1) throw std::invalid_argument("distance_transform: expects 1 channel");
  const int w = mask.width, h = mask.height;
  const double inf = 1e18;
  std::vector<double> grid(static_cast<size_t>(w) * h);
  bool any_fg = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool fg = mask.at(x, y, 0) > 0.5f;
      any_fg = any_fg || fg;
      grid[static_cast<size_t>(y) * w + x] = fg ? 0.0 : inf;
    }
  if (!any_fg) {
    Image out(w, h, 1);
    const float far = std::hypot(static_cast<float>(w), static_cast<float>(h));
    std::fill(out.data.begin(), out.data.end(), far);
    return out;
  }

  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  // Columns.
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
    f.resize(h);
    d.resize(h);
    dt1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
    f.resize(n);
    d.resize(n);
  }
  // Rows.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y) * w + x];
    f.resize(w);
    d.resize(w);
    dt1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<size_t>(y) * w + x] = d[x];
    f.resize(n);
    d.resize(n);
  }
  Image out(w, h, 1);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<float>(std::sqrt(std::min(grid[i], inf)));
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
  double sum = 0;
  for (size_t i = 0; i < a.data.size(); ++i) sum += std::fabs(double(a.data[i]) - double(b.data[i]));
  return a.data.empty() ? 0.0 : sum / a.data.size();
}

}  // namespace quadfit
