// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "omnisplat/cameras.hpp"
#include "omnisplat/core.hpp"
#include "omnisplat/model.hpp"
#include "omnisplat/parallel.hpp"
#include "omnisplat/splatting.hpp"

namespace omnisplat {

// Per-Gaussian accumulated loss gradients for every trainable parameter.
// Culled Gaussians keep exactly zero entries.
template <typename S>
struct GradientBuffer {
  std::vector<Vec3<S>> d_mean;
  std::vector<Vec4<S>> d_rotation;
  std::vector<Vec3<S>> d_log_scale;
  std::vector<S> d_opacity_logit;
  std::vector<Vec3<S>> d_sh_dc;

  void resize_zero(size_t n) {
    d_mean.assign(n, Vec3<S>::Zero());
    d_rotation.assign(n, Vec4<S>::Zero());
    d_log_scale.assign(n, Vec3<S>::Zero());
    d_opacity_logit.assign(n, S(0));
    d_sh_dc.assign(n, Vec3<S>::Zero());
  }

  size_t size() const { return d_mean.size(); }

  bool all_finite() const {
    for (size_t i = 0; i < size(); ++i) {
      if (!d_mean[i].allFinite() || !d_rotation[i].allFinite() || !d_log_scale[i].allFinite() ||
          !std::isfinite(d_opacity_logit[i]) || !d_sh_dc[i].allFinite())
        return false;
    }
    return true;
  }
};

// Loss gradients w.r.t. the 2D splat fields, in splat order.
template <typename S>
struct SplatGradients {
  std::vector<Vec2<S>> d_mean_px;
  std::vector<Vec3<S>> d_conic;  // cotangent of the stored (a, b, c)
  std::vector<Vec3<S>> d_color;
  std::vector<S> d_alpha_max;
};

template <typename S>
struct BackwardOptions {
  // Diagnostic scaling of the dJ/d(x_c, y_c, z_c) tensor components; unit by
  // default. The gradcheck mutation test corrupts one component through this.
  Vec3<S> jacobian_grad_scale = Vec3<S>::Ones();
  int threads = 0;
};

// Exact gradients of the alpha blend: replays each pixel's forward walk with
// identical skip/clamp/termination decisions, then walks the contributions
// back to front accumulating suffix sums. Per-tile scratch buffers are reduced
// in ascending tile order so the result is independent of the thread count.
template <typename S>
SplatGradients<S> rasterize_backward(const ForwardContext<S>& ctx, const ImageBuffer<S>& dl_dimage,
                                     int threads = 0) {
  const int width = ctx.camera.width, height = ctx.camera.height;
  if (dl_dimage.width != width || dl_dimage.height != height)
    throw std::invalid_argument("rasterize_backward: image gradient shape does not match context");

  SplatGradients<S> out;
  out.d_mean_px.assign(ctx.splats.size(), Vec2<S>::Zero());
  out.d_conic.assign(ctx.splats.size(), Vec3<S>::Zero());
  out.d_color.assign(ctx.splats.size(), Vec3<S>::Zero());
  out.d_alpha_max.assign(ctx.splats.size(), S(0));

  const int num_tiles = ctx.tiles.num_tiles();
  struct SlotGrad {
    Vec2<S> mean_px = Vec2<S>::Zero();
    Vec3<S> conic = Vec3<S>::Zero();
    Vec3<S> color = Vec3<S>::Zero();
    S alpha_max = S(0);
  };
  std::vector<std::vector<SlotGrad>> tile_scratch(num_tiles);

  struct Contribution {
    uint32_t ref;
    S alpha;
    S trans;  // transmittance before this contribution
  };

  parallel_for(
      static_cast<int64_t>(num_tiles),
      [&](int64_t t) {
        const uint32_t lo = ctx.tiles.offsets[t], hi = ctx.tiles.offsets[t + 1];
        if (lo == hi) return;
        auto& scratch = tile_scratch[t];
        scratch.assign(hi - lo, SlotGrad{});

        const int tx = static_cast<int>(t) % ctx.tiles.tiles_x;
        const int ty = static_cast<int>(t) / ctx.tiles.tiles_x;
        const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
        const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);

        std::vector<Contribution> contribs;
        contribs.reserve(hi - lo);
        for (int py = py0; py < py1; ++py)
          for (int px = px0; px < px1; ++px) {
            contribs.clear();
            S trans = S(1);
            for (uint32_t k = lo; k < hi; ++k) {
              const Splat2D<S>& sp = ctx.splats[ctx.refs[k]];
              const S dx = S(px) + S(0.5) - sp.mean_px[0];
              const S dy = S(py) + S(0.5) - sp.mean_px[1];
              const S power = S(-0.5) * (sp.conic[0] * dx * dx + sp.conic[2] * dy * dy) -
                              sp.conic[1] * dx * dy;
              if (power > S(0)) continue;
              const S alpha = std::min(S(blend::kAlphaClamp), sp.alpha_max * std::exp(power));
              if (alpha < S(blend::kAlphaSkip)) continue;
              const S next_trans = trans * (S(1) - alpha);
              if (next_trans < S(blend::kTransmittanceStop)) break;
              contribs.push_back({k, alpha, trans});
              trans = next_trans;
            }

            const Vec3<S> dl_dc = dl_dimage.rgb(px, py);
            Vec3<S> suffix = trans * ctx.background;  // color blended behind contribution i
            for (size_t n = contribs.size(); n-- > 0;) {
              const Contribution& cb = contribs[n];
              const Splat2D<S>& sp = ctx.splats[ctx.refs[cb.ref]];
              SlotGrad& slot = scratch[cb.ref - lo];

              const S weight = cb.alpha * cb.trans;
              slot.color += dl_dc * weight;

              const S d_alpha =
                  dl_dc.dot(sp.color) * cb.trans - dl_dc.dot(suffix) / (S(1) - cb.alpha);
              suffix += sp.color * weight;

              const S dx = S(px) + S(0.5) - sp.mean_px[0];
              const S dy = S(py) + S(0.5) - sp.mean_px[1];
              const S power = S(-0.5) * (sp.conic[0] * dx * dx + sp.conic[2] * dy * dy) -
                              sp.conic[1] * dx * dy;
              const S expp = std::exp(power);
              if (sp.alpha_max * expp > S(blend::kAlphaClamp)) continue;  // clamped: zero gradient
              slot.alpha_max += d_alpha * expp;
              const S d_power = d_alpha * cb.alpha;
              slot.mean_px += d_power * Vec2<S>(sp.conic[0] * dx + sp.conic[1] * dy,
                                                sp.conic[1] * dx + sp.conic[2] * dy);
              slot.conic += d_power * Vec3<S>(S(-0.5) * dx * dx, -dx * dy, S(-0.5) * dy * dy);
            }
          }
      },
      threads);

  // Fixed-order reduction keeps gradients bit-identical across thread counts.
  for (int t = 0; t < num_tiles; ++t) {
    const auto& scratch = tile_scratch[t];
    if (scratch.empty()) continue;
    const uint32_t lo = ctx.tiles.offsets[t];
    for (size_t s = 0; s < scratch.size(); ++s) {
      const uint32_t splat = ctx.refs[lo + s];
      out.d_mean_px[splat] += scratch[s].mean_px;
      out.d_conic[splat] += scratch[s].conic;
      out.d_color[splat] += scratch[s].color;
      out.d_alpha_max[splat] += scratch[s].alpha_max;
    }
  }
  return out;
}

// dL/dmean_c = J^T dL/dmean_px through the camera model's Jacobian.
template <typename S>
Vec3<S> mean_backward(const Vec3<S>& point, const Camera<S>& camera, const Vec2<S>& dl_dmean_px) {
  return projection_jacobian(point, camera).transpose() * dl_dmean_px;
}

// Backward through Sigma_p = T Sigma T^T with T = J W. Because J is a function
// of the camera-space mean, the cotangent also flows into the mean through the
// dJ/d(mean_c) tensor; that extra contribution is the second return value.
template <typename S>
std::pair<Mat3<S>, Vec3<S>> covariance_projection_backward(
    const Vec3<S>& point, const Camera<S>& camera, const Mat3<S>& sigma,
    const Mat2<S>& dl_dsigma_p, const Vec3<S>& jacobian_grad_scale = Vec3<S>::Ones()) {
  const Mat23<S> j = projection_jacobian(point, camera);
  const Mat23<S> t = j * camera.rotation_wc;

  const Mat3<S> dl_dsigma = t.transpose() * dl_dsigma_p * t;
  const Mat23<S> dl_dt = (dl_dsigma_p + dl_dsigma_p.transpose()) * t * sigma;
  const Mat23<S> dl_dj = dl_dt * camera.rotation_wc.transpose();

  const auto dj = projection_jacobian_grad(point, camera);
  Vec3<S> dl_dmean_c;
  for (int k = 0; k < 3; ++k)
    dl_dmean_c[k] = jacobian_grad_scale[k] * dl_dj.cwiseProduct(dj[k]).sum();
  return {dl_dsigma, dl_dmean_c};
}

// Full backward pass: image-loss gradient to world-space parameter gradients.
// The mean gradient accumulates both the direct projection path and the
// covariance path.
template <typename S>
GradientBuffer<S> backward(const Scene<S>& scene, const Camera<S>& camera,
                           const ForwardContext<S>& ctx, const ImageBuffer<S>& dl_dimage,
                           const BackwardOptions<S>& options = {}) {
  if (ctx.scene_size != scene.gaussians.size())
    throw std::invalid_argument("backward: forward context was built for a different scene");
  if (ctx.camera.model != camera.model || ctx.camera.width != camera.width ||
      ctx.camera.height != camera.height || ctx.camera.fx != camera.fx ||
      ctx.camera.fy != camera.fy || ctx.camera.cx != camera.cx || ctx.camera.cy != camera.cy ||
      ctx.camera.rotation_wc != camera.rotation_wc ||
      ctx.camera.translation_wc != camera.translation_wc)
    throw std::invalid_argument("backward: forward context was built for a different camera");

  const SplatGradients<S> sg = rasterize_backward(ctx, dl_dimage, options.threads);

  GradientBuffer<S> buf;
  buf.resize_zero(scene.gaussians.size());
  const Vec3<S> cam_center = camera.center();

  parallel_for(
      static_cast<int64_t>(ctx.splats.size()),
      [&](int64_t i) {
        const Splat2D<S>& sp = ctx.splats[i];
        const Gaussian3D<S>& g = scene.gaussians[sp.source_index];
        const Vec3<S>& mu_c = ctx.cam_points[i];

        // Direct mean path.
        const Vec3<S> d_mean_c_direct = mean_backward(mu_c, camera, sg.d_mean_px[i]);

        // Conic cotangent -> projected covariance cotangent. The stored (a, b, c)
        // parameterization maps to the symmetric matrix with b on both
        // off-diagonals, so the b-slot cotangent splits in half.
        Mat2<S> q;
        q << sp.conic[0], sp.conic[1], sp.conic[1], sp.conic[2];
        Mat2<S> gq;
        gq << sg.d_conic[i][0], sg.d_conic[i][1] / S(2), sg.d_conic[i][1] / S(2), sg.d_conic[i][2];
        const Mat2<S> d_sigma_p = -q * gq * q;  // d(Sigma_p^-1) chain

        const Mat3<S> sigma = build_covariance(g.rotation, g.log_scale);
        const auto [d_sigma, d_mean_c_cov] = covariance_projection_backward(
            mu_c, camera, sigma, d_sigma_p, options.jacobian_grad_scale);
        const auto [d_rotation, d_log_scale] =
            build_covariance_backward(g.rotation, g.log_scale, d_sigma);

        const Vec3<S> d_mean_world =
            camera.rotation_wc.transpose() * (d_mean_c_direct + d_mean_c_cov);

        const S a = sigmoid(g.opacity_logit);
        const Vec3<S> dir = (g.mean - cam_center).normalized();

        const int src = sp.source_index;
        buf.d_mean[src] = d_mean_world;
        buf.d_rotation[src] = d_rotation;
        buf.d_log_scale[src] = d_log_scale;
        buf.d_opacity_logit[src] = sg.d_alpha_max[i] * a * (S(1) - a);
        buf.d_sh_dc[src] = eval_sh_dc_backward(g.sh, dir, ctx.sh_degree, sg.d_color[i]);
      },
      options.threads);

  return buf;
}

}  // namespace omnisplat
