#include "cli_commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "config_json.hpp"
#include "quadfit/fitter.hpp"
#include "quadfit/model_io.hpp"
#include "quadfit/objectives.hpp"
#include "quadfit/png_io.hpp"
#include "quadfit/render.hpp"
#include "quadfit/run_manifest.hpp"
#include "quadfit/synthgen.hpp"
#include "quadfit/toy_model.hpp"

namespace quadfit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  json j;
  is >> j;
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(1) << '\n';
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

Image load_mask(const std::string& path) {
  Image m = read_png(path);
  if (m.channels != 1) {
    Image gray(m.width, m.height, 1);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        gray.at(x, y, 0) = (m.at(x, y, 0) + m.at(x, y, 1) + m.at(x, y, 2)) / 3.f;
    m = std::move(gray);
  }
  for (auto& v : m.data) v = v > 0.5f ? 1.f : 0.f;
  return m;
}

BodyModel model_for_gen(const json& config_json, uint64_t seed) {
  if (config_json.contains("model"))
    return load_model(config_json.at("model").get<std::string>());
  ToyModelConfig toy;
  toy.seed = config_json.value("toy_seed", seed);
  return make_toy_model(toy);
}

CameraParams camera_for_fit(const json& kp_json, const std::string& config_path,
                            const Image& image) {
  if (kp_json.contains("camera")) {
    json cam = kp_json.at("camera");
    CameraParams out;
    out.f0 = cam.at("f0").get<double>();
    out.f1 = cam.at("f1").get<double>();
    out.pp = Vec2(cam.at("pp")[0].get<double>(), cam.at("pp")[1].get<double>());
    out.width = cam.at("width").get<int>();
    out.height = cam.at("height").get<int>();
    if (cam.contains("gamma_z0")) out.gamma_z0 = cam.at("gamma_z0").get<double>();
    out.validate();
    return out;
  }
  if (!config_path.empty()) {
    const json cfg = read_json(config_path);
    if (cfg.contains("camera")) {
      json cam = cfg.at("camera");
      CameraParams out;
      out.f0 = cam.at("f0").get<double>();
      out.f1 = cam.at("f1").get<double>();
      out.pp = Vec2(cam.at("pp")[0].get<double>(), cam.at("pp")[1].get<double>());
      out.width = cam.at("width").get<int>();
      out.height = cam.at("height").get<int>();
      if (cam.contains("gamma_z0")) out.gamma_z0 = cam.at("gamma_z0").get<double>();
      out.validate();
      return out;
    }
  }
  return CameraParams::centered(2700.0, 2700.0, image.width, image.height);
}

json metrics_row(int id, const FitMetrics& m) {
  json row{{"sample_id", id}};
  if (m.has_pck) {
    row["pck05"] = m.pck05;
    row["pck10"] = m.pck10;
  }
  if (m.has_iou) row["iou"] = m.iou;
  return row;
}

void write_metrics_files(const std::string& json_path, const std::vector<json>& rows,
                         bool any_iou) {
  json agg;
  double p05 = 0, p10 = 0, io = 0;
  int n = 0, n_iou = 0;
  for (const auto& r : rows) {
    if (r.contains("pck05")) {
      p05 += r.at("pck05").get<double>();
      p10 += r.at("pck10").get<double>();
      ++n;
    }
    if (r.contains("iou")) {
      io += r.at("iou").get<double>();
      ++n_iou;
    }
  }
  if (n > 0) {
    agg["pck05"] = p05 / n;
    agg["pck10"] = p10 / n;
  }
  if (n_iou > 0) agg["iou"] = io / n_iou;
  write_json(json_path, json{{"samples", rows}, {"aggregate", agg}});

  const std::string csv_path = fs::path(json_path).replace_extension(".csv").string();
  std::ofstream csv(csv_path);
  csv << (any_iou ? "sample_id,pck05,pck10,iou\n" : "sample_id,pck05,pck10\n");
  for (const auto& r : rows) {
    csv << r.at("sample_id").get<int>() << ',' << r.value("pck05", 0.0) << ','
        << r.value("pck10", 0.0);
    if (any_iou) {
      csv << ',';
      if (r.contains("iou")) csv << r.at("iou").get<double>();
    }
    csv << '\n';
  }
}

}  // namespace

Image draw_overlay(const Image& image, const Image& mask, bool outline) {
  Image out = image.channels == 3 ? image : Image(image.width, image.height, 3);
  if (image.channels == 1)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, y, 0);
  const float red[3] = {1.f, 0.15f, 0.1f};
  for (int y = 0; y < mask.height && y < out.height; ++y) {
    for (int x = 0; x < mask.width && x < out.width; ++x) {
      const bool in = mask.at(x, y, 0) > 0.5f;
      if (!in) continue;
      if (outline) {
        bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1;
        if (!edge)
          edge = mask.at(x - 1, y, 0) <= 0.5f || mask.at(x + 1, y, 0) <= 0.5f ||
                 mask.at(x, y - 1, 0) <= 0.5f || mask.at(x, y + 1, 0) <= 0.5f;
        if (!edge) continue;
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = red[c];
      } else {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = 0.6f * out.at(x, y, c) + 0.4f * red[c];
      }
    }
  }
  return out;
}

int cmd_synth(const SynthArgs& args) {
  Timer timer;
  json config_json = read_json(args.config_path);
  if (args.seed) config_json["seed"] = *args.seed;
  GenConfig config = gen_config_from_json(config_json);

  BodyModel model = model_for_gen(config_json, config.seed);
  std::vector<VecX> pool = config_json.contains("pose_pool")
                               ? load_pose_pool(config_json.at("pose_pool").get<std::string>())
                               : make_toy_pose_pool(config.pose_pool_size, config.seed);

  const TexelMap texel_map = build_texel_map(model, kAtlasSize);
  std::vector<TextureAtlas> atlases;
  for (int s = 0; s < config.subjects; ++s) {
    TextureAtlas atlas = make_toy_atlas(model, texel_map, Rng::mix(config.seed, 1000 + s));
    if (config.white_balance_augment && s % 2 == 1) atlas.image = white_balance_atlas(atlas.image);
    atlases.push_back(std::move(atlas));
  }

  fs::create_directories(args.out_dir);
  DatasetResult result =
      generate_dataset(model, atlases, pool, config, args.out_dir, std::max(1, args.jobs));
  save_model((fs::path(args.out_dir) / "model.json").string(), model);
  save_pose_pool((fs::path(args.out_dir) / "pose_pool.json").string(), pool);

  // Re-render consistency check on every emitted record.
  for (const auto& record : result.records) {
    Image background = record.scene.background_index >= 0
                           ? Image()  // file-backed backgrounds are not re-verified
                           : make_procedural_background(config.image_size,
                                                        record.scene.background_seed);
    if (record.scene.background_index >= 0) continue;
    GeneratedSample redo = generate_sample(model, atlases[record.scene.subject], texel_map,
                                           record.scene, background, config);
    const Image stored_mask =
        load_mask((fs::path(args.out_dir) / record.mask_path).string());
    if (iou(stored_mask, redo.mask) < 0.999)
      throw std::runtime_error("synth: re-render silhouette mismatch on sample " +
                               std::to_string(record.id));
    for (Eigen::Index i = 0; i < record.keypoints.rows(); ++i) {
      const double d = (redo.record.keypoints.row(i) - record.keypoints.row(i)).norm();
      if (d > 0.5)
        throw std::runtime_error("synth: re-render keypoint mismatch on sample " +
                                 std::to_string(record.id));
    }
  }

  RunManifest manifest;
  manifest.command = "synth";
  manifest.seed = config.seed;
  manifest.config_echo = gen_config_to_json(config).dump();
  manifest.add_input(args.config_path);
  manifest.add_output(result.manifest_path);
  manifest.add_output((fs::path(args.out_dir) / "model.json").string());
  manifest.wall_seconds = timer.seconds();
  manifest.write((fs::path(args.out_dir) / "run_manifest.json").string());
  std::cout << "synth: wrote " << result.records.size() << " samples to " << args.out_dir
            << " (" << result.skipped.size() << " skipped)\n";
  return kOk;
}

namespace {

int fit_single(const FitArgs& args, const BodyModel& model, const FitConfig& config,
               const PosePrior* prior) {
  Timer timer;
  const Image image = read_png(args.image_path);
  const json kp_json = read_json(args.keypoints_path);
  FitInput input;
  input.camera = camera_for_fit(kp_json, args.config_path, image);
  const auto& kps = kp_json.at("keypoints");
  input.keypoints.resize(static_cast<Eigen::Index>(kps.size()), 2);
  input.keypoint_visible.resize(kps.size());
  for (size_t i = 0; i < kps.size(); ++i) {
    input.keypoints(static_cast<Eigen::Index>(i), 0) = kps[i][0].get<double>();
    input.keypoints(static_cast<Eigen::Index>(i), 1) = kps[i][1].get<double>();
    input.keypoint_visible[i] = kps[i].size() > 2 ? kps[i][2].get<double>() > 0.5 : 1;
  }
  if (!args.mask_path.empty()) input.mask = load_mask(args.mask_path);

  std::optional<PoseState> init;
  if (!args.init_path.empty()) init = load_params(args.init_path).state;

  const FitResult fit =
      fit_supervised(input, model, config, prior, init ? &*init : nullptr);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  save_params((out / "params.json").string(), {fit.state, input.camera});

  const PosedMesh posed = pose_mesh(model, fit.state);
  export_obj((out / "mesh.obj").string(), posed.vertices, model.mesh.faces,
             model.has_uv() ? &model.uv : nullptr);
  const double f = effective_focal(input.camera, fit.state.focal_feature);
  const ProjectedMesh proj = project_mesh(posed.vertices, model.mesh.faces, f, input.camera.pp);
  const Image pred_mask = hard_mask(rasterize_hard(proj, input.camera.width, input.camera.height));
  write_png((out / "overlay.png").string(), draw_overlay(image, pred_mask, true));

  const FitMetrics metrics =
      evaluate_fit(model, fit.state, input.camera, input.keypoints, input.keypoint_visible,
                   input.mask ? &*input.mask : nullptr);
  json report = metrics_row(0, metrics);
  report["final_loss"] = fit.final_loss;
  write_json((out / "metrics.json").string(), json{{"samples", json::array({report})}});

  RunManifest manifest;
  manifest.command = "fit";
  manifest.seed = config.seed;
  manifest.config_echo = fit_config_to_json(config).dump();
  manifest.add_input(args.model_path);
  manifest.add_input(args.image_path);
  manifest.add_input(args.keypoints_path);
  if (!args.mask_path.empty()) manifest.add_input(args.mask_path);
  for (const char* name : {"params.json", "mesh.obj", "overlay.png", "metrics.json"})
    manifest.add_output((out / name).string());
  manifest.wall_seconds = timer.seconds();
  manifest.write((out / "run_manifest.json").string());
  std::cout << "fit: final loss " << fit.final_loss << ", outputs in " << args.out_dir << "\n";
  return kOk;
}

int fit_batch(const FitArgs& args, const BodyModel& model, const FitConfig& config,
              const PosePrior* prior) {
  Timer timer;
  json config_json = args.config_path.empty() ? json::object() : read_json(args.config_path);
  BatchOptions options = batch_options_from_json(config_json);
  if (args.seed) options.seed = *args.seed;
  options.jobs = std::max(options.jobs, args.jobs);

  std::vector<FitResult> fits;
  std::vector<PoseState> states;
  const BatchResult result =
      batch_fit(args.dataset_dir, model, config, prior, options, &fits, &states);

  fs::create_directories(args.out_dir);
  const std::vector<std::string> annots = list_dataset_annotations(args.dataset_dir);
  std::vector<json> rows;
  for (size_t i = 0; i < result.rows.size(); ++i) {
    const BatchRow& row = result.rows[i];
    if (!row.ok) {
      std::cerr << "fit: sample " << row.id << " failed: " << row.error << "\n";
      continue;
    }
    const AnnotationRecord record = read_annotation(annots[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", record.id);
    const fs::path sample_dir = fs::path(args.out_dir) / name;
    fs::create_directories(sample_dir);
    save_params((sample_dir / "params.json").string(), {states[i], record.camera});
    rows.push_back(metrics_row(record.id, row.metrics));
  }
  write_metrics_files((fs::path(args.out_dir) / "metrics.json").string(), rows, true);

  if (result.n_ok == 0 && result.rows.empty())
    std::cerr << "fit: warning: no samples found in " << args.dataset_dir << "\n";

  RunManifest manifest;
  manifest.command = "fit";
  manifest.seed = options.seed;
  manifest.config_echo = fit_config_to_json(config).dump();
  manifest.add_input(args.model_path);
  manifest.add_output((fs::path(args.out_dir) / "metrics.json").string());
  manifest.wall_seconds = timer.seconds();
  manifest.write((fs::path(args.out_dir) / "run_manifest.json").string());
  std::cout << "fit: " << result.n_ok << "/" << result.rows.size()
            << " samples, mean pck05 " << result.mean_pck05 << ", pck10 " << result.mean_pck10
            << ", iou " << result.mean_iou << "\n";
  return kOk;
}

}  // namespace

int cmd_fit(const FitArgs& args) {
  const BodyModel model = load_model(args.model_path);
  FitConfig config =
      args.config_path.empty() ? FitConfig::defaults() : fit_config_from_json(read_json(args.config_path));
  if (args.seed) config.seed = *args.seed;

  std::optional<PosePrior> prior;
  std::string pool_path = args.pose_pool_path;
  if (pool_path.empty() && !args.dataset_dir.empty()) {
    const fs::path candidate = fs::path(args.dataset_dir) / "pose_pool.json";
    if (fs::exists(candidate)) pool_path = candidate.string();
  }
  if (!pool_path.empty())
    prior = PosePrior::from_gaussian(fit_pose_gaussian(load_pose_pool(pool_path)));

  if (!args.dataset_dir.empty()) return fit_batch(args, model, config, prior ? &*prior : nullptr);
  if (args.image_path.empty() || args.keypoints_path.empty())
    throw std::invalid_argument("fit: need --image and --keypoints (or --dataset)");
  return fit_single(args, model, config, prior ? &*prior : nullptr);
}

int cmd_refine(const RefineArgs& args) {
  Timer timer;
  if (args.atlas_path.empty()) throw std::invalid_argument("refine: missing --atlas");
  const BodyModel model = load_model(args.model_path);
  if (!model.has_uv()) throw std::invalid_argument("refine: model has no uv parameterization");
  FitConfig config =
      args.config_path.empty() ? FitConfig::defaults() : fit_config_from_json(read_json(args.config_path));
  if (args.seed) config.seed = *args.seed;

  const Image image = read_png(args.image_path);
  std::string init_file = args.init_path;
  if (fs::is_directory(init_file)) init_file = (fs::path(init_file) / "params.json").string();
  const ParamsFile init = load_params(init_file);

  TextureAtlas atlas;
  atlas.image = read_png(args.atlas_path);
  atlas.regions = model.region_layout;
  atlas.validate();

  Vec3 background(0.5, 0.5, 0.5);
  const json bg = read_json(args.background_path);
  if (bg.contains("color")) {
    background = Vec3(bg.at("color")[0].get<double>(), bg.at("color")[1].get<double>(),
                      bg.at("color")[2].get<double>());
  } else if (bg.value("estimate_corners", false)) {
    std::optional<Image> mask;
    if (!args.mask_path.empty()) mask = load_mask(args.mask_path);
    background = estimate_background_color(image, mask ? &*mask : nullptr);
  } else {
    throw std::invalid_argument("refine: background json needs color or estimate_corners");
  }

  CameraParams camera = init.camera;
  if (camera.width != image.width || camera.height != image.height)
    throw std::invalid_argument("refine: image size does not match the camera in the init params");

  TextureAtlas refined;
  const FitResult result = refine_photometric(image, init.state, atlas, background, model,
                                              camera, config, &refined);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  save_params((out / "params.json").string(), {result.state, camera});
  RenderRequest req;
  req.width = camera.width;
  req.height = camera.height;
  req.background = background;
  const RenderOutput render = render_scene(model, result.state, camera, &refined, req);
  write_png((out / "render.png").string(), render.color);
  write_png((out / "overlay.png").string(), draw_overlay(image, hard_mask(render.hard), true));
  if (config.refine.opt_texture) write_png((out / "atlas_refined.png").string(), refined.image);
  write_json((out / "metrics.json").string(),
             json{{"photometric_first", result.refine_trace.front()},
                  {"photometric_best", result.best_loss},
                  {"best_iter", result.best_iter},
                  {"low_confidence", result.low_confidence}});

  RunManifest manifest;
  manifest.command = "refine";
  manifest.seed = config.seed;
  manifest.config_echo = fit_config_to_json(config).dump();
  manifest.add_input(args.model_path);
  manifest.add_input(args.image_path);
  manifest.add_input(args.atlas_path);
  manifest.add_input(init_file);
  for (const char* name : {"params.json", "render.png", "overlay.png", "metrics.json"})
    manifest.add_output((out / name).string());
  manifest.wall_seconds = timer.seconds();
  manifest.write((out / "run_manifest.json").string());
  std::cout << "refine: photometric " << result.refine_trace.front() << " -> " << result.best_loss
            << (result.low_confidence ? " (low confidence)" : "") << "\n";
  return kOk;
}

int cmd_render(const RenderArgs& args) {
  Timer timer;
  const BodyModel model = load_model(args.model_path);
  const ParamsFile params = load_params(args.params_path);

  std::optional<TextureAtlas> atlas;
  if (!args.atlas_path.empty()) {
    TextureAtlas a;
    a.image = read_png(args.atlas_path);
    a.regions = model.region_layout;
    a.validate();
    atlas = std::move(a);
  }

  RenderRequest req;
  req.width = params.camera.width;
  req.height = params.camera.height;
  req.background = Vec3(0.5, 0.55, 0.6);
  const RenderOutput render =
      render_scene(model, params.state, params.camera, atlas ? &*atlas : nullptr, req);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  const Image mask = hard_mask(render.hard);
  if (atlas) write_png((out / "color.png").string(), render.color);
  write_png((out / "silhouette.png").string(), render.silhouette);
  const Image overlay_base = args.image_path.empty()
                                 ? (atlas ? render.color : Image(req.width, req.height, 3, 0.35f))
                                 : read_png(args.image_path);
  write_png((out / "overlay.png").string(),
            draw_overlay(overlay_base, mask, args.overlay_style != "blend"));
  if (atlas) {
    Image preview = atlas->image;
    for (const auto& r : atlas->regions) {
      for (int x = r[0]; x < r[0] + r[2]; ++x) {
        for (int c = 0; c < 3; ++c) {
          preview.at(x, r[1], c) = c == 1 ? 1.f : 0.f;
          preview.at(x, r[1] + r[3] - 1, c) = c == 1 ? 1.f : 0.f;
        }
      }
      for (int y = r[1]; y < r[1] + r[3]; ++y) {
        for (int c = 0; c < 3; ++c) {
          preview.at(r[0], y, c) = c == 1 ? 1.f : 0.f;
          preview.at(r[0] + r[2] - 1, y, c) = c == 1 ? 1.f : 0.f;
        }
      }
    }
    write_png((out / "atlas_preview.png").string(), preview);
  }
  const PosedMesh posed = pose_mesh(model, params.state);
  export_obj((out / "mesh.obj").string(), posed.vertices, model.mesh.faces,
             model.has_uv() ? &model.uv : nullptr);

  RunManifest manifest;
  manifest.command = "render";
  manifest.add_input(args.model_path);
  manifest.add_input(args.params_path);
  if (!args.atlas_path.empty()) manifest.add_input(args.atlas_path);
  manifest.add_output((out / "silhouette.png").string());
  manifest.add_output((out / "overlay.png").string());
  manifest.add_output((out / "mesh.obj").string());
  if (atlas) manifest.add_output((out / "color.png").string());
  manifest.wall_seconds = timer.seconds();
  manifest.write((out / "run_manifest.json").string());
  std::cout << "render: outputs in " << args.out_dir << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& args) {
  Timer timer;
  const BodyModel model = load_model(args.model_path);
  const std::vector<std::string> annots = list_dataset_annotations(args.dataset_dir);
  std::vector<json> rows;
  bool any_iou = false;
  for (const auto& annot_path : annots) {
    const AnnotationRecord record = read_annotation(annot_path);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", record.id);
    const fs::path params_path = fs::path(args.results_dir) / name / "params.json";
    if (!fs::exists(params_path)) {
      std::cerr << "eval: warning: no prediction for sample " << record.id << "\n";
      continue;
    }
    const ParamsFile pred = load_params(params_path.string());
    std::optional<Image> mask;
    if (!args.ignore_masks) {
      const fs::path mask_path = fs::path(args.dataset_dir) / record.mask_path;
      if (fs::exists(mask_path))
        mask = load_mask(mask_path.string());
      else
        std::cerr << "eval: warning: missing mask for sample " << record.id << "\n";
    }
    const FitMetrics metrics =
        evaluate_fit(model, pred.state, record.camera, record.keypoints, record.keypoint_visible,
                     mask ? &*mask : nullptr);
    any_iou = any_iou || metrics.has_iou;
    rows.push_back(metrics_row(record.id, metrics));
  }
  fs::create_directories(fs::path(args.out_path).parent_path().empty()
                             ? "."
                             : fs::path(args.out_path).parent_path().string());
  write_metrics_files(args.out_path, rows, any_iou);

  RunManifest manifest;
  manifest.command = "eval";
  manifest.add_input(args.model_path);
  manifest.add_output(args.out_path);
  manifest.wall_seconds = timer.seconds();
  const fs::path manifest_path =
      fs::path(args.out_path).parent_path() / "eval_run_manifest.json";
  manifest.write(manifest_path.string());
  std::cout << "eval: wrote " << rows.size() << " rows to " << args.out_path << "\n";
  return kOk;
}

}  // namespace quadfit::cli
