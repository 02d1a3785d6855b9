// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "omnisplat/cli.hpp"
#include "omnisplat/io.hpp"
#include "omnisplat/optimize.hpp"
#include "omnisplat/oracle.hpp"

namespace omnisplat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

CameraModel parse_model(const std::string& s) {
  if (s == "pinhole") return CameraModel::Pinhole;
  if (s == "fisheye_equidistant") return CameraModel::FisheyeEquidistant;
  if (s == "panorama") return CameraModel::Panorama;
  throw std::runtime_error("unknown camera model '" + s +
                           "' (expected pinhole, fisheye_equidistant, panorama)");
}

Vec3<double> parse_rgb(const std::string& s) {
  Vec3<double> v;
  char comma;
  std::istringstream is(s);
  if (!(is >> v[0] >> comma >> v[1] >> comma >> v[2]))
    throw std::runtime_error("expected background as r,g,b");
  return v;
}

Camera<double> override_model(Camera<double> cam, CameraModel model) {
  cam.model = model;
  if (model == CameraModel::FisheyeEquidistant && !(cam.fov_max > 0))
    cam.fov_max = pi<double>() / 2;
  return cam;
}

std::string frame_name(size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03zu.%s", i, ext.c_str());
  return buf;
}

void print_stats_line(size_t frame, const std::string& file, const Camera<double>& cam,
                      const RenderStats& st) {
  std::cout << "frame=" << frame << " file=" << file << " model=" << camera_model_name(cam.model)
            << " width=" << cam.width << " height=" << cam.height << " splats=" << st.num_splats
            << " culled=" << st.num_culled << " degenerate=" << st.num_degenerate
            << " intersections=" << st.num_intersections << " preprocess_ms=" << st.preprocess_ms
            << " binning_ms=" << st.binning_ms << " sort_ms=" << st.sort_ms
            << " raster_ms=" << st.raster_ms << " aux_bytes=" << st.peak_aux_bytes << "\n";
}

struct LoadedDataset {
  Dataset<double> dataset;
  std::string gt_scene_path;  // empty when absent
};

LoadedDataset load_dataset_dir(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "dataset.json";
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("train: cannot open " + manifest.string());
  json doc;
  in >> doc;

  LoadedDataset out;
  if (doc.contains("background")) {
    const auto bg = doc["background"].get<std::vector<double>>();
    for (int c = 0; c < 3; ++c) out.dataset.background[c] = bg.at(c);
  }
  const auto cams = load_cameras((root / doc.at("cameras").get<std::string>()).string());
  for (const auto& w : cams.warnings) std::cerr << "warning: " << w << "\n";
  if (doc.contains("gt_scene")) out.gt_scene_path = (root / doc["gt_scene"].get<std::string>()).string();

  for (const auto& jview : doc.at("views")) {
    View<double> view;
    view.camera = cams.cameras.at(jview.at("camera").get<size_t>());
    view.image = read_image((root / jview.at("image").get<std::string>()).string());
    if (jview.contains("transmittance")) {
      int w = 0, h = 0;
      view.transmittance =
          read_gray_image((root / jview["transmittance"].get<std::string>()).string(), &w, &h);
      if (w != view.image.width || h != view.image.height)
        throw std::runtime_error("train: transmittance size mismatch in " + dir);
    }
    out.dataset.views.push_back(std::move(view));
  }
  return out;
}

template <typename T>
T json_value(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

int cmd_render(const std::string& scene_path, const std::string& cameras_path,
               const std::string& out_dir, const std::string& model_override,
               const std::string& bg, int sh_degree, const std::string& format, int threads) {
  std::vector<std::string> warnings;
  const Scene<float> scene_f = load_ply_as<float>(scene_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  auto cams = load_cameras(cameras_path);
  for (const auto& w : cams.warnings) std::cerr << "warning: " << w << "\n";

  fs::create_directories(out_dir);
  for (size_t i = 0; i < cams.cameras.size(); ++i) {
    Camera<double> cam = cams.cameras[i];
    if (!model_override.empty()) cam = override_model(cam, parse_model(model_override));

    Scene<float> scene = scene_f;
    if (!bg.empty()) scene.background = parse_rgb(bg).cast<float>();

    RenderOptions<float> opts;
    opts.sh_degree = sh_degree;
    opts.threads = threads;
    const auto rr = render(scene, cam.cast<float>(), opts);
    const std::string file = (fs::path(out_dir) / frame_name(i, format)).string();
    write_image(rr.image, file);
    print_stats_line(i, file, cam, rr.stats);
  }
  return 0;
}

int cmd_bench(const std::string& scene_path, const std::string& cameras_path, int repeat,
              int threads) {
  std::vector<std::string> warnings;
  const Scene<float> scene = load_ply_as<float>(scene_path, &warnings);
  auto cams = load_cameras(cameras_path);

  for (size_t i = 0; i < cams.cameras.size(); ++i) {
    const Camera<float> cam = cams.cameras[i].cast<float>();
    RenderOptions<float> opts;
    opts.threads = threads;
    double total_ms = 0, max_ms = 0;
    uint64_t intersections = 0;
    size_t aux = 0;
    for (int r = 0; r < repeat; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto rr = render(scene, cam, opts);
      const auto t1 = std::chrono::steady_clock::now();
      const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      total_ms += ms;
      max_ms = std::max(max_ms, ms);
      if (r == 0)
        intersections = rr.stats.num_intersections;
      else if (intersections != rr.stats.num_intersections)
        throw std::runtime_error("bench: intersection count changed between repeats");
      aux = std::max(aux, rr.stats.peak_aux_bytes);
    }
    std::cout << "camera=" << i << " model=" << camera_model_name(cams.cameras[i].model)
              << " repeats=" << repeat << " fps=" << (repeat * 1000.0 / total_ms)
              << " max_ms=" << max_ms << " intersections=" << intersections
              << " aux_bytes=" << aux << "\n";
  }
  return 0;
}

int cmd_gradcheck(const std::string& model, uint64_t seed, int scene_size,
                  const std::string& report_path) {
  const auto [scene, camera] = make_gradcheck_scene(parse_model(model), seed, scene_size);
  const GradcheckReport report = gradcheck(scene, camera);
  std::cout << report.to_lines();
  if (!report_path.empty()) {
    std::ofstream os(report_path);
    os << report.to_lines();
  }
  return report.pass ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  if (!in) throw std::runtime_error("synth: cannot open " + spec_path);
  json doc;
  in >> doc;

  SynthSpec spec;
  spec.n_gaussians = json_value(doc, "n_gaussians", spec.n_gaussians);
  spec.extent = json_value(doc, "extent", spec.extent);
  spec.seed = json_value(doc, "seed", spec.seed);
  spec.model = parse_model(json_value<std::string>(doc, "camera_model", "fisheye_equidistant"));
  spec.n_views = json_value(doc, "n_views", spec.n_views);
  spec.fov_deg = json_value(doc, "fov_deg", spec.fov_deg);
  spec.width = json_value(doc, "width", spec.width);
  spec.height = json_value(doc, "height", spec.height);
  if (doc.contains("background")) {
    const auto bg = doc["background"].get<std::vector<double>>();
    for (int c = 0; c < 3; ++c) spec.background[c] = bg.at(c);
  }
  const std::string format = json_value<std::string>(doc, "format", "ppm");

  const SyntheticResult synth = make_synthetic(spec);

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  save_ply(synth.ground_truth.cast<float>(), (root / "gt_scene.ply").string());

  std::vector<Camera<double>> cameras;
  for (const auto& v : synth.dataset.views) cameras.push_back(v.camera);
  save_cameras(cameras, (root / "cameras.json").string());

  json manifest;
  manifest["background"] = {spec.background[0], spec.background[1], spec.background[2]};
  manifest["cameras"] = "cameras.json";
  manifest["gt_scene"] = "gt_scene.ply";
  manifest["views"] = json::array();
  for (size_t i = 0; i < synth.dataset.views.size(); ++i) {
    char img[32], trans[32];
    std::snprintf(img, sizeof(img), "view_%03zu.%s", i, format.c_str());
    std::snprintf(trans, sizeof(trans), "trans_%03zu.pgm", i);
    write_image(synth.dataset.views[i].image, (root / img).string());
    write_gray_image(synth.dataset.views[i].transmittance, spec.width, spec.height,
                     (root / trans).string());
    manifest["views"].push_back({{"camera", i}, {"image", img}, {"transmittance", trans}});
  }
  std::ofstream os(root / "dataset.json");
  os << manifest.dump(2) << "\n";
  std::cout << "wrote " << synth.dataset.views.size() << " views to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& init, const std::string& init_ply,
              const std::string& config_path, const std::string& out_path,
              const std::string& trace_path) {
  json cfg_doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("train: cannot open config " + config_path);
    in >> cfg_doc;
  }

  LoadedDataset loaded = load_dataset_dir(dataset_dir);

  TrainConfig<double> cfg;
  cfg.iterations = json_value(cfg_doc, "iterations", cfg.iterations);
  cfg.lr_mean = json_value(cfg_doc, "lr_mean", cfg.lr_mean);
  cfg.lr_rotation = json_value(cfg_doc, "lr_rotation", cfg.lr_rotation);
  cfg.lr_log_scale = json_value(cfg_doc, "lr_log_scale", cfg.lr_log_scale);
  cfg.lr_opacity = json_value(cfg_doc, "lr_opacity", cfg.lr_opacity);
  cfg.lr_sh_dc = json_value(cfg_doc, "lr_sh_dc", cfg.lr_sh_dc);
  cfg.loss_lambda = json_value(cfg_doc, "loss_lambda", cfg.loss_lambda);
  cfg.random_background = json_value(cfg_doc, "random_background", cfg.random_background);
  cfg.seed = json_value(cfg_doc, "seed", cfg.seed);
  cfg.sh_degree = json_value(cfg_doc, "sh_degree", cfg.sh_degree);
  cfg.eval_every = json_value(cfg_doc, "eval_every", cfg.eval_every);
  cfg.threads = json_value(cfg_doc, "threads", cfg.threads);

  Scene<double> initial;
  if (init == "ply") {
    if (init_ply.empty()) throw std::runtime_error("train: --init ply requires --init-ply");
    initial = load_ply_as<double>(init_ply);
  } else if (init == "synthetic") {
    if (loaded.gt_scene_path.empty())
      throw std::runtime_error("train: dataset has no gt_scene for synthetic init");
    initial = load_ply_as<double>(loaded.gt_scene_path);
    const double noise_frac = json_value(cfg_doc, "init_noise_frac", 0.05);
    const double extent = camera_extent(loaded.dataset) / 1.1 / 2.4;  // ring radius -> scene extent
    std::mt19937_64 rng(cfg.seed ^ 0xa02bdbf7bb3c0a7ull);
    std::normal_distribution<double> noise(0.0, noise_frac * extent);
    for (auto& g : initial.gaussians)
      for (int c = 0; c < 3; ++c) g.mean[c] += noise(rng);
  } else {
    throw std::runtime_error("train: --init must be 'synthetic' or 'ply'");
  }
  initial.background = loaded.dataset.background;

  const TrainResult<double> result = train(initial, loaded.dataset, cfg);
  save_ply(result.scene.cast<float>(), out_path);

  const std::string trace_file =
      trace_path.empty() ? (fs::path(out_path).parent_path() / "trace.csv").string() : trace_path;
  std::ofstream os(trace_file);
  os << trace_to_csv(result.trace);

  std::cout << "iterations=" << cfg.iterations << " final_loss=" << result.trace.back().loss
            << " test_psnr=" << result.test_psnr << " test_ssim=" << result.test_ssim
            << " scene=" << out_path << " trace=" << trace_file << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"omnisplat: CPU differentiable Gaussian splatting for pinhole, fisheye and panorama cameras"};
  app.require_subcommand(1);

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a PLY scene from a camera file");
  std::string scene_path, cameras_path, out_dir, model_override, bg, format = "ppm";
  int sh_degree = 3, threads = 0;
  render_cmd->add_option("--scene", scene_path, "Scene PLY")->required();
  render_cmd->add_option("--cameras", cameras_path, "Camera JSON file")->required();
  render_cmd->add_option("--out", out_dir, "Output directory")->required();
  render_cmd->add_option("--model-override", model_override,
                         "Render with a different camera model (pinhole, fisheye_equidistant, panorama)");
  render_cmd->add_option("--bg", bg, "Background color r,g,b");
  render_cmd->add_option("--sh-degree", sh_degree, "SH evaluation degree (0-3)");
  render_cmd->add_option("--format", format, "Image format: ppm or png");
  render_cmd->add_option("--threads", threads, "Worker threads (0 = auto)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Optimize a scene against a dataset");
  std::string dataset_dir, init = "synthetic", init_ply, config_path, train_out = "trained.ply", trace_path;
  train_cmd->add_option("--dataset", dataset_dir, "Dataset directory (from synth)")->required();
  train_cmd->add_option("--init", init, "Initialization: synthetic (noisy ground truth) or ply");
  train_cmd->add_option("--init-ply", init_ply, "Initial scene for --init ply");
  train_cmd->add_option("--config", config_path, "Training config JSON");
  train_cmd->add_option("--out", train_out, "Output scene PLY")->required();
  train_cmd->add_option("--trace", trace_path, "Loss trace CSV path");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  std::string gc_model = "fisheye_equidistant", gc_report;
  uint64_t gc_seed = 7;
  int gc_size = 10;
  gc_cmd->add_option("--model", gc_model, "Camera model");
  gc_cmd->add_option("--seed", gc_seed, "Scene seed");
  gc_cmd->add_option("--scene-size", gc_size, "Number of Gaussians");
  gc_cmd->add_option("--report", gc_report, "Also write the report to this file");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Rendering throughput and intersection counters");
  std::string bench_scene, bench_cameras;
  int repeat = 5, bench_threads = 0;
  bench_cmd->add_option("--scene", bench_scene, "Scene PLY")->required();
  bench_cmd->add_option("--cameras", bench_cameras, "Camera JSON file")->required();
  bench_cmd->add_option("--repeat", repeat, "Renders per camera");
  bench_cmd->add_option("--threads", bench_threads, "Worker threads (0 = auto)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_spec, synth_out;
  synth_cmd->add_option("--spec", synth_spec, "Synthesis spec JSON")->required();
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (render_cmd->parsed())
      return cmd_render(scene_path, cameras_path, out_dir, model_override, bg, sh_degree, format,
                        threads);
    if (train_cmd->parsed())
      return cmd_train(dataset_dir, init, init_ply, config_path, train_out, trace_path);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_model, gc_seed, gc_size, gc_report);
    if (bench_cmd->parsed()) return cmd_bench(bench_scene, bench_cameras, repeat, bench_threads);
    if (synth_cmd->parsed()) return cmd_synth(synth_spec, synth_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace omnisplat
