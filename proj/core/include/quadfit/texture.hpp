#pragma once

#include <array>
#include <string>
#include <vector>

#include "quadfit/body_model.hpp"
#include "quadfit/image.hpp"

namespace quadfit {

constexpr int kAtlasSize = 256;

// Texture atlas: an RGB image partitioned into 4 axis-aligned sub-regions.
// The uv parameterization itself lives on the BodyModel (per face corner).
struct TextureAtlas {
  Image image;  // (kAtlasSize, kAtlasSize, 3)
  std::vector<std::array<int, 4>> regions;  // {x, y, w, h}, partition the atlas

  static std::vector<std::array<int, 4>> quadrant_layout(int size = kAtlasSize);
  void validate() const;
};

// Per-textel flow into normalized image coordinates [-1,1]^2 plus a
// visibility flag. Invisible textels carry no meaning (and no gradient).
struct UVFlow {
  int width = 0;
  int height = 0;
  std::vector<float> u;        // normalized x in [-1,1]
  std::vector<float> v;        // normalized y in [-1,1]
  std::vector<uint8_t> visible;

  UVFlow() = default;
  UVFlow(int w, int h)
      : width(w), height(h),
        u(static_cast<size_t>(w) * h, 0.f),
        v(static_cast<size_t>(w) * h, 0.f),
        visible(static_cast<size_t>(w) * h, 0) {}
  size_t size() const { return u.size(); }
};

Vec2 normalized_to_pixels(double un, double vn, int width, int height);
Vec2 pixels_to_normalized(double x, double y, int width, int height);

// Splits an atlas image into the 4 region sub-images (region order).
std::vector<Image> split_subimages(const Image& atlas,
                                   const std::vector<std::array<int, 4>>& regions);
// Exact inverse of split_subimages; throws if a sub-image does not match its
// region's size.
Image stitch_subimages(const std::vector<Image>& subs,
                       const std::vector<std::array<int, 4>>& regions);

// T(u,v) = bilinear_sample(image, flow(u,v)) on visible textels; invisible
// textels keep their previous content.
void apply_uvflow(const Image& image, const UVFlow& flow, Image* atlas_image);

// Per-textel face assignment: for each textel center, the face whose uv
// triangle contains it (ties broken by lowest face index), with barycentric
// coordinates in that triangle. face = -1 where no face covers the textel.
struct TexelMap {
  int size = 0;
  std::vector<int> face;
  std::vector<float> bary;  // 3 per textel
};
TexelMap build_texel_map(const BodyModel& model, int atlas_size = kAtlasSize);

// uv-flow file format: one line of JSON ({width, height, channels,
// row_major}) terminated by '\n', followed by raw little-endian float32
// data, channels (u, v, visibility) interleaved, row-major.
void write_uvflow(const std::string& path, const UVFlow& flow);
UVFlow read_uvflow(const std::string& path);

}  // namespace quadfit
