#include <CLI11.hpp>
#include <iostream>

#include "cli_commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"quadfit: articulated quadruped capture from images"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  app.add_flag_callback("--version", [] {
    std::cout << "quadfit 0.1.0\n";
    std::exit(0);
  });
  app.add_option("--seed", seed, "Override the config seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs, "Worker threads for batch commands");

  quadfit::cli::SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate an annotated synthetic dataset");
  synth_cmd->add_option("--config", synth.config_path, "Generation config JSON")->required();
  synth_cmd->add_option("--out", synth.out_dir, "Output dataset directory")->required();

  quadfit::cli::FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the model to an image or a dataset");
  fit_cmd->add_option("--model", fit.model_path, "Model JSON")->required();
  fit_cmd->add_option("--config", fit.config_path, "Fit config JSON");
  fit_cmd->add_option("--out", fit.out_dir, "Output directory")->required();
  fit_cmd->add_option("--image", fit.image_path, "Input image (single-image mode)");
  fit_cmd->add_option("--keypoints", fit.keypoints_path, "Keypoints JSON (single-image mode)");
  fit_cmd->add_option("--mask", fit.mask_path, "Segmentation mask PNG");
  fit_cmd->add_option("--init", fit.init_path, "Initial params.json");
  fit_cmd->add_option("--dataset", fit.dataset_dir, "Dataset directory (batch mode)");
  fit_cmd->add_option("--pose-pool", fit.pose_pool_path, "Pose pool JSON for the Gaussian prior");

  quadfit::cli::RefineArgs refine;
  CLI::App* refine_cmd = app.add_subcommand("refine", "Photometric per-instance refinement");
  refine_cmd->add_option("--model", refine.model_path, "Model JSON")->required();
  refine_cmd->add_option("--config", refine.config_path, "Fit config JSON");
  refine_cmd->add_option("--image", refine.image_path, "Input image")->required();
  refine_cmd->add_option("--init", refine.init_path, "Initial fit (params.json or directory)")
      ->required();
  refine_cmd->add_option("--atlas", refine.atlas_path, "Texture atlas PNG");
  refine_cmd->add_option("--background", refine.background_path, "Background model JSON")
      ->required();
  refine_cmd->add_option("--mask", refine.mask_path, "Mask for corner background estimation");
  refine_cmd->add_option("--out", refine.out_dir, "Output directory")->required();

  quadfit::cli::RenderArgs render;
  CLI::App* render_cmd = app.add_subcommand("render", "Render a fitted state");
  render_cmd->add_option("--model", render.model_path, "Model JSON")->required();
  render_cmd->add_option("--params", render.params_path, "Params JSON")->required();
  render_cmd->add_option("--atlas", render.atlas_path, "Texture atlas PNG");
  render_cmd->add_option("--image", render.image_path, "Overlay target image");
  render_cmd->add_option("--out", render.out_dir, "Output directory")->required();
  render_cmd->add_option("--overlay-style", render.overlay_style, "outline|blend");

  quadfit::cli::EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against a dataset");
  eval_cmd->add_option("--model", eval.model_path, "Model JSON")->required();
  eval_cmd->add_option("--dataset", eval.dataset_dir, "Dataset directory")->required();
  eval_cmd->add_option("--results", eval.results_dir, "Predictions directory")->required();
  eval_cmd->add_option("--out", eval.out_path, "Output metrics JSON")->required();
  eval_cmd->add_flag("--ignore-masks", eval.ignore_masks, "Skip IoU even when masks exist");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return quadfit::cli::kValidationError;
  }

  try {
    if (*synth_cmd) {
      if (seed_set) synth.seed = seed;
      synth.jobs = jobs;
      return quadfit::cli::cmd_synth(synth);
    }
    if (*fit_cmd) {
      if (seed_set) fit.seed = seed;
      fit.jobs = jobs;
      return quadfit::cli::cmd_fit(fit);
    }
    if (*refine_cmd) {
      if (seed_set) refine.seed = seed;
      return quadfit::cli::cmd_refine(refine);
    }
    if (*render_cmd) return quadfit::cli::cmd_render(render);
    if (*eval_cmd) return quadfit::cli::cmd_eval(eval);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return quadfit::cli::kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return quadfit::cli::kRuntimeError;
  }
  return quadfit::cli::kValidationError;
}
