#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quadfit/types.hpp"

namespace quadfit {

// Row-major float image, values nominally in [0,1].
// Pixel (x, y) has its center at continuous coordinates (x + 0.5, y + 0.5).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.f)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// Bilinear tap positions and weights for sampling at continuous (x, y).
// Coordinates are clamped so taps always fall inside the image.
struct BilinearTaps {
  int x0, y0, x1, y1;
  double w00, w10, w01, w11;  // weight for (x0,y0), (x1,y0), (x0,y1), (x1,y1)
  double dwx[4];              // d(weight)/dx in the same order
  double dwy[4];
  bool clamped_x, clamped_y;
};
BilinearTaps bilinear_taps(const Image& img, double x, double y);

// Samples all channels at (x, y) into out[0..channels).
void sample_bilinear(const Image& img, double x, double y, float* out);

Image resize_bilinear(const Image& img, int out_w, int out_h);

// 2x2 box filter; odd trailing row/column is averaged over the available taps.
Image downsample2(const Image& img);

// Square crop starting at (x0, y0) with side `size` (source pixels),
// resampled to out_size x out_size. Reads outside the source are clamped.
Image crop_resize(const Image& img, double x0, double y0, double size, int out_size);

Image flip_horizontal(const Image& img);

void rgb_to_hsv(float r, float g, float b, float* h, float* s, float* v);
void hsv_to_rgb(float h, float s, float v, float* r, float* g, float* b);

// Photometric jitter: hue shift in [0,1) turns, multiplicative saturation and
// brightness scales. Output clamped to [0,1].
Image adjust_hsv(const Image& img, double hue_shift, double sat_scale, double val_scale);

// Exact Euclidean distance (in pixels) to the nearest foreground pixel
// (mask > 0.5). Zero on foreground. Felzenszwalb-Huttenlocher two-pass.
Image distance_transform(const Image& mask);

// Mean absolute difference over all pixels/channels.
double mean_abs_diff(const Image& a, const Image& b);

}  // namespace quadfit
