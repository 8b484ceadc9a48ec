#pragma once

#include <cstdint>
#include <vector>

#include "quadfit/body_model.hpp"
#include "quadfit/texture.hpp"

namespace quadfit {

// Procedural low-poly quadruped used for self-contained datasets and tests.
// Model frame: +y points down (toward the feet), +z along the body toward
// the head, mirror plane x = 0. The rest pose therefore faces the camera;
// side views come from the root rotation.
struct ToyModelConfig {
  int ring_segments = 12;  // must be divisible by 4
  int shape_dims = 40;
  uint64_t seed = 0;
  double size_scale = 1.0;

  void validate() const;
};

BodyModel make_toy_model(const ToyModelConfig& config = {});

// Plausible articulated poses (gait-like leg swings, neck/tail motion,
// alternating side views). All joint rotations stay well below pi.
std::vector<VecX> make_toy_pose_pool(int count, uint64_t seed);

// Smooth procedural coat for the toy model: low-frequency stripes evaluated
// on the rest surface, written through the texel map so chart interiors stay
// continuous. Gutter texels are filled by dilation.
TextureAtlas make_toy_atlas(const BodyModel& model, const TexelMap& texel_map, uint64_t seed);

// Landmark index groups for the fitter's staged schedule (first 8 landmarks
// are torso/axial points by construction).
std::vector<int> toy_torso_landmarks();

}  // namespace quadfit
