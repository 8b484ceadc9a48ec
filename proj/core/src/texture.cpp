#include "quadfit/texture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace quadfit {

using nlohmann::json;

std::vector<std::array<int, 4>> TextureAtlas::quadrant_layout(int size) {
  const int h = size / 2;
  return {{{0, 0, h, h}, {h, 0, size - h, h}, {0, h, h, size - h}, {h, h, size - h, size - h}}};
}

void TextureAtlas::validate() const {
  if (image.channels != 3 || image.width != image.height)
    throw std::invalid_argument("atlas: expects a square RGB image");
  if (regions.size() != 4) throw std::invalid_argument("atlas: expects 4 regions");
  long total = 0;
  for (const auto& r : regions) {
    if (r[0] < 0 || r[1] < 0 || r[2] <= 0 || r[3] <= 0 || r[0] + r[2] > image.width ||
        r[1] + r[3] > image.height)
      throw std::invalid_argument("atlas: region outside image");
    total += static_cast<long>(r[2]) * r[3];
  }
  if (total != static_cast<long>(image.width) * image.height)
    throw std::invalid_argument("atlas: regions must cover the image exactly");
}

Vec2 normalized_to_pixels(double un, double vn, int width, int height) {
  return Vec2((un + 1.0) * 0.5 * width, (vn + 1.0) * 0.5 * height);
}

Vec2 pixels_to_normalized(double x, double y, int width, int height) {
  return Vec2(2.0 * x / width - 1.0, 2.0 * y / height - 1.0);
}

std::vector<Image> split_subimages(const Image& atlas,
                                   const std::vector<std::array<int, 4>>& regions) {
  std::vector<Image> out;
  out.reserve(regions.size());
  for (const auto& r : regions) {
    Image sub(r[2], r[3], atlas.channels);
    for (int y = 0; y < r[3]; ++y)
      for (int x = 0; x < r[2]; ++x)
        for (int c = 0; c < atlas.channels; ++c)
          sub.at(x, y, c) = atlas.at(r[0] + x, r[1] + y, c);
    out.push_back(std::move(sub));
  }
  return out;
}

Image stitch_subimages(const std::vector<Image>& subs,
                       const std::vector<std::array<int, 4>>& regions) {
  if (subs.size() != regions.size())
    throw std::invalid_argument("stitch: sub-image count mismatch");
  int w = 0, h = 0;
  for (const auto& r : regions) {
    w = std::max(w, r[0] + r[2]);
    h = std::max(h, r[1] + r[3]);
  }
  const int channels = subs.empty() ? 0 : subs[0].channels;
  Image out(w, h, channels);
  for (size_t i = 0; i < subs.size(); ++i) {
    const auto& r = regions[i];
    const Image& sub = subs[i];
    if (sub.width != r[2] || sub.height != r[3] || sub.channels != channels)
      throw std::invalid_argument("stitch: sub-image size mismatch");
    for (int y = 0; y < r[3]; ++y)
      for (int x = 0; x < r[2]; ++x)
        for (int c = 0; c < channels; ++c)
          out.at(r[0] + x, r[1] + y, c) = sub.at(x, y, c);
  }
  return out;
}

void apply_uvflow(const Image& image, const UVFlow& flow, Image* atlas_image) {
  if (!atlas_image || atlas_image->width != flow.width || atlas_image->height != flow.height)
    throw std::invalid_argument("apply_uvflow: atlas/flow size mismatch");
  std::vector<float> px(image.channels);
  for (int ty = 0; ty < flow.height; ++ty) {
    for (int tx = 0; tx < flow.width; ++tx) {
      const size_t i = static_cast<size_t>(ty) * flow.width + tx;
      if (!flow.visible[i]) continue;
      const Vec2 p = normalized_to_pixels(flow.u[i], flow.v[i], image.width, image.height);
      sample_bilinear(image, p.x(), p.y(), px.data());
      for (int c = 0; c < atlas_image->channels && c < image.channels; ++c)
        atlas_image->at(tx, ty, c) = px[c];
    }
  }
}

TexelMap build_texel_map(const BodyModel& model, int atlas_size) {
  if (!model.has_uv()) throw std::invalid_argument("build_texel_map: model has no uv");
  TexelMap map;
  map.size = atlas_size;
  map.face.assign(static_cast<size_t>(atlas_size) * atlas_size, -1);
  map.bary.assign(static_cast<size_t>(atlas_size) * atlas_size * 3, 0.f);

  for (int f = 0; f < model.mesh.face_count(); ++f) {
    Vec2 a = model.uv.row(3 * f + 0).transpose() * atlas_size;
    Vec2 b = model.uv.row(3 * f + 1).transpose() * atlas_size;
    Vec2 c = model.uv.row(3 * f + 2).transpose() * atlas_size;
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(atlas_size - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(atlas_size - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const size_t i = static_cast<size_t>(y) * atlas_size + x;
        if (map.face[i] >= 0) continue;
        const Vec2 p(x + 0.5, y + 0.5);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        map.face[i] = f;
        map.bary[3 * i + 0] = static_cast<float>(w0);
        map.bary[3 * i + 1] = static_cast<float>(w1);
        map.bary[3 * i + 2] = static_cast<float>(w2);
      }
    }
  }
  return map;
}

void write_uvflow(const std::string& path, const UVFlow& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_uvflow: cannot open " + path);
  json header = {{"width", flow.width},
                 {"height", flow.height},
                 {"channels", 3},
                 {"row_major", true}};
  os << header.dump() << '\n';
  std::vector<float> row(static_cast<size_t>(flow.width) * 3);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const size_t i = static_cast<size_t>(y) * flow.width + x;
      row[3 * x + 0] = flow.u[i];
      row[3 * x + 1] = flow.v[i];
      row[3 * x + 2] = flow.visible[i] ? 1.f : 0.f;
    }
    os.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  if (!os) throw std::runtime_error("write_uvflow: write failed for " + path);
}

UVFlow read_uvflow(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_uvflow: cannot open " + path);
  std::string line;
  std::getline(is, line);
  const json header = json::parse(line);
  const int w = header.at("width").get<int>();
  const int h = header.at("height").get<int>();
  if (header.at("channels").get<int>() != 3)
    throw std::runtime_error("read_uvflow: expected 3 channels");
  UVFlow flow(w, h);
  std::vector<float> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!is) throw std::runtime_error("read_uvflow: truncated file " + path);
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      flow.u[i] = row[3 * x + 0];
      flow.v[i] = row[3 * x + 1];
      flow.visible[i] = row[3 * x + 2] > 0.5f;
    }
  }
  return flow;
}

}  // namespace quadfit
