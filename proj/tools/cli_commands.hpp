#pragma once

#include <optional>
#include <string>

#include "quadfit/image.hpp"

namespace quadfit::cli {

// Exit codes: 0 ok, 1 validation error, 2 runtime error.
constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

struct SynthArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  int jobs = 1;
};
int cmd_synth(const SynthArgs& args);

struct FitArgs {
  std::string model_path;
  std::string config_path;  // optional
  std::string out_dir;
  // Single-image mode:
  std::string image_path;
  std::string keypoints_path;
  std::string mask_path;      // optional
  std::string init_path;      // optional params.json
  // Batch mode:
  std::string dataset_dir;
  std::string pose_pool_path;  // optional Gaussian prior source
  std::optional<uint64_t> seed;
  int jobs = 1;
};
int cmd_fit(const FitArgs& args);

struct RefineArgs {
  std::string model_path;
  std::string config_path;
  std::string image_path;
  std::string init_path;      // params.json or a fit output directory
  std::string atlas_path;
  std::string background_path;  // bg.json
  std::string mask_path;        // optional, for corner background estimation
  std::string out_dir;
  std::optional<uint64_t> seed;
};
int cmd_refine(const RefineArgs& args);

struct RenderArgs {
  std::string model_path;
  std::string params_path;
  std::string atlas_path;  // optional
  std::string image_path;  // optional overlay target
  std::string out_dir;
  std::string overlay_style = "outline";  // or "blend"
};
int cmd_render(const RenderArgs& args);

struct EvalArgs {
  std::string model_path;
  std::string dataset_dir;
  std::string results_dir;
  std::string out_path;  // metrics.json (csv written alongside)
  bool ignore_masks = false;
};
int cmd_eval(const EvalArgs& args);

// Outline or alpha-blend overlay of a predicted mask on an image.
Image draw_overlay(const Image& image, const Image& mask, bool outline);

}  // namespace quadfit::cli
