// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnisplat/cameras.hpp"
#include "omnisplat/core.hpp"
#include "omnisplat/gradients.hpp"
#include "omnisplat/metrics.hpp"
#include "omnisplat/model.hpp"
#include "omnisplat/oracle.hpp"
#include "omnisplat/splatting.hpp"

namespace omnisplat {

template <typename S>
struct View {
  Camera<S> camera;
  ImageBuffer<S> image;
  // Final transmittance of the target render, when known. Lets the trainer
  // recomposite targets over a randomized background.
  std::vector<S> transmittance;
};

template <typename S>
struct Dataset {
  std::vector<View<S>> views;
  Vec3<S> background = Vec3<S>::Zero();  // color the targets were composited over

  // Every 8th view is held out for testing, starting with the first.
  static bool is_test_view(size_t i) { return i % 8 == 0; }

  std::vector<size_t> train_indices() const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < views.size(); ++i)
      if (!is_test_view(i)) idx.push_back(i);
    return idx;
  }
  std::vector<size_t> test_indices() const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < views.size(); ++i)
      if (is_test_view(i)) idx.push_back(i);
    return idx;
  }
};

template <typename S>
struct TrainConfig {
  int iterations = 2000;
  S lr_mean = S(1.6e-4);  // scaled by the scene extent at train time
  S lr_rotation = S(1e-3);
  S lr_log_scale = S(5e-3);
  S lr_opacity = S(5e-2);
  S lr_sh_dc = S(2.5e-3);
  S loss_lambda = S(0.2);
  bool random_background = false;
  uint64_t seed = 0;
  int sh_degree = 0;
  int eval_every = 100;
  int threads = 0;
};

template <typename S>
struct AdamParams {
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-15);
};

// First/second moment accumulators, one slot per parameter (GradientBuffer
// already has exactly that shape).
template <typename S>
struct AdamState {
  int64_t step = 0;
  GradientBuffer<S> m, v;

  void init(size_t n) {
    step = 0;
    m.resize_zero(n);
    v.resize_zero(n);
  }
};

template <typename S>
struct GroupLearningRates {
  S mean, rotation, log_scale, opacity, sh_dc;
};

namespace optimize_detail {

template <typename S>
void adam_update(S& param, S grad, S& m, S& v, S lr, const AdamParams<S>& ap, S bc1, S bc2) {
  m = ap.beta1 * m + (S(1) - ap.beta1) * grad;
  v = ap.beta2 * v + (S(1) - ap.beta2) * grad * grad;
  const S mhat = m / bc1;
  const S vhat = v / bc2;
  param -= lr * mhat / (std::sqrt(vhat) + ap.eps);
}

}  // namespace optimize_detail

// One Adam step with bias correction and per-group learning rates.
template <typename S>
void adam_step(Scene<S>& scene, const GradientBuffer<S>& grads, AdamState<S>& state,
               const GroupLearningRates<S>& lr, const AdamParams<S>& params = {}) {
  const size_t n = scene.gaussians.size();
  if (grads.size() != n || state.m.size() != n)
    throw std::invalid_argument("adam_step: gradient/state size does not match the scene");
  for (size_t i = 0; i < n; ++i) {
    if (!grads.d_mean[i].allFinite() || !grads.d_rotation[i].allFinite() ||
        !grads.d_log_scale[i].allFinite() || !std::isfinite(grads.d_opacity_logit[i]) ||
        !grads.d_sh_dc[i].allFinite())
      throw std::runtime_error("adam_step: non-finite gradient for Gaussian " + std::to_string(i));
  }
  ++state.step;
  const S bc1 = S(1) - std::pow(params.beta1, S(state.step));
  const S bc2 = S(1) - std::pow(params.beta2, S(state.step));
  using optimize_detail::adam_update;
  for (size_t i = 0; i < n; ++i) {
    Gaussian3D<S>& g = scene.gaussians[i];
    for (int c = 0; c < 3; ++c)
      adam_update(g.mean[c], grads.d_mean[i][c], state.m.d_mean[i][c], state.v.d_mean[i][c],
                  lr.mean, params, bc1, bc2);
    for (int c = 0; c < 4; ++c)
      adam_update(g.rotation[c], grads.d_rotation[i][c], state.m.d_rotation[i][c],
                  state.v.d_rotation[i][c], lr.rotation, params, bc1, bc2);
    for (int c = 0; c < 3; ++c)
      adam_update(g.log_scale[c], grads.d_log_scale[i][c], state.m.d_log_scale[i][c],
                  state.v.d_log_scale[i][c], lr.log_scale, params, bc1, bc2);
    adam_update(g.opacity_logit, grads.d_opacity_logit[i], state.m.d_opacity_logit[i],
                state.v.d_opacity_logit[i], lr.opacity, params, bc1, bc2);
    for (int c = 0; c < 3; ++c)
      adam_update(g.sh(0, c), grads.d_sh_dc[i][c], state.m.d_sh_dc[i][c], state.v.d_sh_dc[i][c],
                  lr.sh_dc, params, bc1, bc2);
  }
}

// Radius of the camera rig, the scale reference for the mean learning rate.
template <typename S>
S camera_extent(const Dataset<S>& dataset) {
  if (dataset.views.empty()) return S(1);
  Vec3<S> centroid = Vec3<S>::Zero();
  for (const auto& v : dataset.views) centroid += v.camera.center();
  centroid /= S(dataset.views.size());
  S radius = S(0);
  for (const auto& v : dataset.views)
    radius = std::max(radius, (v.camera.center() - centroid).norm());
  return radius > S(0) ? S(1.1) * radius : S(1);
}

template <typename S>
struct TraceRow {
  int iteration;
  S loss;
  S test_psnr;      // only meaningful when has_psnr
  bool has_psnr = false;
};

template <typename S>
struct TrainResult {
  Scene<S> scene;
  std::vector<TraceRow<S>> trace;
  S test_psnr = S(0);
  S test_ssim = S(0);
};

template <typename S>
std::string trace_to_csv(const std::vector<TraceRow<S>>& rows) {
  std::ostringstream os;
  os << "iteration,loss,test_psnr\n";
  for (const auto& r : rows) {
    os << r.iteration << "," << r.loss << ",";
    if (r.has_psnr) os << r.test_psnr;
    os << "\n";
  }
  return os.str();
}

// Desk-scale training loop: cycle shuffled training views, render, L1 + D-SSIM
// loss, analytic backward, Adam step. Fixed Gaussian count (no densification).
template <typename S>
TrainResult<S> train(const Scene<S>& initial, const Dataset<S>& dataset,
                     const TrainConfig<S>& config) {
  const auto train_idx = dataset.train_indices();
  if (train_idx.empty()) throw std::invalid_argument("train: dataset has no training views");
  if (config.iterations <= 0) throw std::invalid_argument("train: iterations must be positive");

  TrainResult<S> out;
  out.scene = initial;

  const S extent = camera_extent(dataset);
  const GroupLearningRates<S> rates{config.lr_mean * extent, config.lr_rotation,
                                    config.lr_log_scale, config.lr_opacity, config.lr_sh_dc};
  AdamState<S> state;
  state.init(initial.gaussians.size());
  AdamParams<S> adam;

  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order = train_idx;
  size_t cursor = order.size();  // trigger reshuffle on first use

  RenderOptions<S> ro;
  ro.sh_degree = config.sh_degree;
  ro.threads = config.threads;

  const auto test_metrics = [&](S* out_ssim) {
    const auto test_idx = dataset.test_indices();
    if (test_idx.empty()) {
      if (out_ssim) *out_ssim = S(0);
      return S(0);
    }
    S psnr_sum = S(0), ssim_sum = S(0);
    RenderOptions<S> eval_opts = ro;
    eval_opts.background = dataset.background;
    for (const size_t i : test_idx) {
      const auto rr = render(out.scene, dataset.views[i].camera, eval_opts);
      psnr_sum += psnr(rr.image, dataset.views[i].image);
      if (out_ssim) ssim_sum += ssim(rr.image, dataset.views[i].image);
    }
    if (out_ssim) *out_ssim = ssim_sum / S(test_idx.size());
    return psnr_sum / S(test_idx.size());
  };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int it = 1; it <= config.iterations; ++it) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const View<S>& view = dataset.views[order[cursor++]];

    Vec3<S> bg = dataset.background;
    if (config.random_background)
      bg = Vec3<S>(S(unit(rng)), S(unit(rng)), S(unit(rng)));

    RenderOptions<S> iter_opts = ro;
    iter_opts.background = bg;
    const RenderResult<S> rr = render(out.scene, view.camera, iter_opts);

    ImageBuffer<S> target = view.image;
    if (config.random_background && !view.transmittance.empty()) {
      const Vec3<S> shift = bg - dataset.background;
      for (int p = 0; p < target.width * target.height; ++p)
        for (int c = 0; c < 3; ++c)
          target.pixels[static_cast<size_t>(p) * 3 + c] += view.transmittance[p] * shift[c];
    }

    const LossResult<S> loss = l1_dssim_loss(rr.image, target, config.loss_lambda);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("train: loss diverged (non-finite) at iteration " +
                               std::to_string(it));

    BackwardOptions<S> bo;
    bo.threads = config.threads;
    const GradientBuffer<S> grads = backward(out.scene, view.camera, rr.context, loss.d_rendered, bo);
    adam_step(out.scene, grads, state, rates, adam);

    TraceRow<S> row{it, loss.total, S(0), false};
    if (config.eval_every > 0 && it % config.eval_every == 0) {
      row.test_psnr = test_metrics(nullptr);
      row.has_psnr = true;
    }
    out.trace.push_back(row);
  }

  out.test_psnr = test_metrics(&out.test_ssim);
  return out;
}

struct SynthSpec {
  int n_gaussians = 50;
  double extent = 1.0;
  uint64_t seed = 1;
  CameraModel model = CameraModel::FisheyeEquidistant;
  int n_views = 8;
  double fov_deg = 120.0;
  int width = 128, height = 128;
  Vec3<double> background = Vec3<double>::Zero();
};

struct SyntheticResult {
  Scene<double> ground_truth;
  Dataset<double> dataset;
};

namespace optimize_detail {

inline Camera<double> look_at_camera(const Vec3<double>& eye, const Vec3<double>& target,
                                     const SynthSpec& spec) {
  const Vec3<double> fwd = (target - eye).normalized();
  Vec3<double> up(0, 1, 0);
  if (std::abs(fwd.dot(up)) > 0.99) up = Vec3<double>(1, 0, 0);
  const Vec3<double> right = up.cross(fwd).normalized();
  const Vec3<double> down = fwd.cross(right);

  Camera<double> cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.rotation_wc.row(0) = right.transpose();
  cam.rotation_wc.row(1) = down.transpose();
  cam.rotation_wc.row(2) = fwd.transpose();
  cam.translation_wc = -cam.rotation_wc * eye;

  const double half_fov = deg_to_rad(spec.fov_deg) / 2.0;
  const double half_image = 0.5 * std::min(spec.width, spec.height);
  cam.cx = spec.width / 2.0;
  cam.cy = spec.height / 2.0;
  switch (spec.model) {
    case CameraModel::Pinhole:
      cam.model = CameraModel::Pinhole;
      cam.fx = cam.fy = half_image / std::tan(std::min(half_fov, deg_to_rad(70.0)));
      break;
    case CameraModel::FisheyeEquidistant:
      cam.model = CameraModel::FisheyeEquidistant;
      cam.fov_max = half_fov;
      cam.fx = cam.fy = half_image / half_fov;
      break;
    case CameraModel::Panorama:
      cam.model = CameraModel::Panorama;
      break;
  }
  return cam;
}

}  // namespace optimize_detail

// Seeded synthetic scene plus a camera ring around it. Targets come from the
// brute-force oracle renderer so training validates the fast path against
// independently generated images. For 180-degree fisheye rigs the generator
// reserves one Gaussian per view at a wide incidence angle (> 60 degrees).
inline SyntheticResult make_synthetic(const SynthSpec& spec) {
  if (spec.n_views < 2) throw std::invalid_argument("make_synthetic: need at least 2 views");
  std::mt19937_64 rng(spec.seed ^ 0xd1b54a32d192ed03ull);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  SyntheticResult out;
  out.ground_truth.background = spec.background;
  out.dataset.background = spec.background;

  const double ring_radius = 2.4 * spec.extent;
  std::vector<Camera<double>> cameras;
  for (int k = 0; k < spec.n_views; ++k) {
    const double az = 2.0 * pi<double>() * k / spec.n_views;
    const Vec3<double> eye(ring_radius * std::cos(az), 0.25 * spec.extent * std::sin(3.0 * az),
                           ring_radius * std::sin(az));
    cameras.push_back(optimize_detail::look_at_camera(eye, Vec3<double>::Zero(), spec));
  }

  const bool wide_rig = spec.model == CameraModel::FisheyeEquidistant && spec.fov_deg >= 170.0;
  const int n_wide = wide_rig ? std::min(spec.n_views, spec.n_gaussians / 2) : 0;
  const int n_free = spec.n_gaussians - n_wide;

  for (int i = 0; i < spec.n_gaussians; ++i) {
    Gaussian3D<double> g;
    if (i < n_free) {
      const double r = 0.5 * spec.extent * std::cbrt(uniform(0.0, 1.0));
      const double phi = uniform(0.0, 2.0 * pi<double>());
      const double ct = uniform(-1.0, 1.0);
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      g.mean = r * Vec3<double>(st * std::cos(phi), ct, st * std::sin(phi));
    } else {
      // One Gaussian near each camera, 70 degrees off its optical axis.
      const Camera<double>& cam = cameras[i - n_free];
      const Vec3<double> eye = cam.center();
      const Vec3<double> axis = cam.rotation_wc.row(2).transpose();
      const Vec3<double> side = cam.rotation_wc.row(0).transpose();
      const double a = deg_to_rad(70.0);
      const Vec3<double> dir = std::cos(a) * axis + std::sin(a) * side;
      g.mean = eye + (0.8 * spec.extent) * dir;
    }
    Vec3<double> aniso(uniform(0.6, 1.4), uniform(0.6, 1.4), uniform(0.6, 1.4));
    g.log_scale = (uniform(0.05, 0.10) * spec.extent * aniso.array()).log().matrix();
    Eigen::Vector4d q;
    do {
      q = Eigen::Vector4d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    } while (q.norm() < 0.1);
    g.rotation = q / q.norm();
    g.opacity_logit = logit(uniform(0.35, 0.85));
    for (int ch = 0; ch < 3; ++ch) g.sh(0, ch) = uniform(-1.25, 1.25);
    out.ground_truth.gaussians.push_back(g);
  }

  OracleOptions<double> oo;
  oo.sh_degree = 0;
  oo.max_gaussians = std::max<size_t>(2000, out.ground_truth.gaussians.size());
  for (const auto& cam : cameras) {
    View<double> view;
    view.camera = cam;
    view.image = bruteforce_render(out.ground_truth, cam, oo, &view.transmittance);
    out.dataset.views.push_back(std::move(view));
  }

  if (wide_rig) {
    // Post-condition: every view sees at least one Gaussian past 60 degrees.
    for (const auto& view : out.dataset.views) {
      bool found = false;
      for (const auto& g : out.ground_truth.gaussians) {
        const Vec3<double> p = world_to_camera(g.mean, view.camera);
        const double theta = std::atan2(std::hypot(p[0], p[1]), p[2]);
        if (theta > deg_to_rad(60.0) && theta < view.camera.fov_max) {
          found = true;
          break;
        }
      }
      if (!found)
        throw std::runtime_error("make_synthetic: wide-angle coverage post-condition failed");
    }
  }
  return out;
}

}  // namespace omnisplat
