// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "omnisplat/cameras.hpp"
#include "omnisplat/core.hpp"
#include "omnisplat/model.hpp"
#include "omnisplat/parallel.hpp"

namespace omnisplat {

// A Gaussian projected to the image plane. `conic` holds the upper triangle
// (a, b, c) of the inverse 2D covariance; the quadratic form at offset d is
// a dx^2 + 2 b dx dy + c dy^2.
template <typename S>
struct Splat2D {
  Vec2<S> mean_px = Vec2<S>::Zero();
  Vec3<S> conic = Vec3<S>::Zero();
  S depth = S(0);
  int radius_px = 0;
  Vec3<S> color = Vec3<S>::Zero();
  S alpha_max = S(0);
  int source_index = -1;  // index into the scene's Gaussian list
};

struct TileIndex {
  int tiles_x = 0, tiles_y = 0;
  std::vector<uint32_t> offsets;  // size tiles_x*tiles_y + 1, spans into the sorted ref list

  int num_tiles() const { return tiles_x * tiles_y; }
};

struct RenderStats {
  uint64_t num_intersections = 0;
  double preprocess_ms = 0, binning_ms = 0, sort_ms = 0, raster_ms = 0;
  size_t peak_aux_bytes = 0;
  uint32_t num_splats = 0;
  uint32_t num_culled = 0;      // invisible or off-screen
  uint32_t num_degenerate = 0;  // non-invertible projected covariance
};

template <typename S>
struct RenderOptions {
  int sh_degree = 3;
  int threads = 0;  // 0 = hardware default, capped by OMNISPLAT_THREADS
  std::optional<Vec3<S>> background;  // overrides the scene background
};

template <typename S>
struct PreprocessResult {
  std::vector<Splat2D<S>> splats;
  std::vector<Vec3<S>> cam_points;  // camera-space mean per splat
  uint32_t num_culled = 0;
  uint32_t num_degenerate = 0;
};

// Geometry preprocessing: project every visible Gaussian to a Splat2D. Only
// this stage knows about camera models; binning, sorting and rasterizing below
// are camera-agnostic.
template <typename S>
PreprocessResult<S> preprocess(const Scene<S>& scene, const Camera<S>& camera,
                               const RenderOptions<S>& options = {}) {
  const size_t n = scene.gaussians.size();
  std::vector<Splat2D<S>> slots(n);
  std::vector<Vec3<S>> points(n);
  std::vector<uint8_t> state(n, 0);  // 0 culled, 1 kept, 2 degenerate

  const Vec3<S> cam_center = camera.center();
  const Mat3<S> w = camera.rotation_wc;

  parallel_for(
      static_cast<int64_t>(n),
      [&](int64_t i) {
        const Gaussian3D<S>& g = scene.gaussians[i];
        const Vec3<S> mu_c = world_to_camera(g.mean, camera);
        const ProjectionResult<S> pr = project(mu_c, camera);
        if (!pr.visible) return;

        const Mat23<S> t = pr.jacobian * w;
        const Mat3<S> sigma = build_covariance(g.rotation, g.log_scale);
        Mat2<S> sigma_p = t * sigma * t.transpose();
        sigma_p(0, 0) += S(blend::kCovarianceDilation);
        sigma_p(1, 1) += S(blend::kCovarianceDilation);

        const S det = sigma_p(0, 0) * sigma_p(1, 1) - sigma_p(0, 1) * sigma_p(1, 0);
        if (!(det > S(0))) {
          state[i] = 2;
          return;
        }

        const S mid = (sigma_p(0, 0) + sigma_p(1, 1)) / S(2);
        const S lambda_max =
            mid + std::sqrt(std::max(mid * mid - det, S(0)));
        const int radius = static_cast<int>(std::ceil(S(blend::kRadiusSigma) * std::sqrt(lambda_max)));

        // Off-screen splats (bounding box misses the image) are culled here so
        // the binning stage only ever sees contributing splats.
        const S mx = pr.pixel[0], my = pr.pixel[1];
        if (mx + S(radius) < S(0) || mx - S(radius) > S(camera.width) || my + S(radius) < S(0) ||
            my - S(radius) > S(camera.height))
          return;

        Splat2D<S>& sp = slots[i];
        sp.mean_px = pr.pixel;
        sp.conic = Vec3<S>(sigma_p(1, 1) / det, -sigma_p(0, 1) / det, sigma_p(0, 0) / det);
        sp.depth = camera.model == CameraModel::Pinhole ? mu_c[2] : mu_c.norm();
        sp.radius_px = radius;
        const Vec3<S> dir = (g.mean - cam_center).normalized();
        sp.color = eval_sh(g.sh, dir, options.sh_degree);
        sp.alpha_max = sigmoid(g.opacity_logit);
        sp.source_index = static_cast<int>(i);
        points[i] = mu_c;
        state[i] = 1;
      },
      options.threads);

  PreprocessResult<S> out;
  out.splats.reserve(n);
  out.cam_points.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (state[i] == 1) {
      out.splats.push_back(slots[i]);
      out.cam_points.push_back(points[i]);
    } else if (state[i] == 2) {
      ++out.num_degenerate;
    } else {
      ++out.num_culled;
    }
  }
  return out;
}

namespace detail {

inline uint32_t depth_key_bits(float d) {
  const uint32_t u = std::bit_cast<uint32_t>(d);
  return (u & 0x80000000u) ? ~u : (u | 0x80000000u);
}

inline uint64_t depth_key_bits(double d) {
  const uint64_t u = std::bit_cast<uint64_t>(d);
  return (u & 0x8000000000000000ull) ? ~u : (u | 0x8000000000000000ull);
}

// Stable LSD radix sort of (keys, payload) pairs, byte digits.
template <typename Key, typename Payload>
void radix_sort_pairs(std::vector<Key>& keys, std::vector<Payload>& payload) {
  const size_t n = keys.size();
  std::vector<Key> keys_tmp(n);
  std::vector<Payload> pay_tmp(n);
  constexpr int kPasses = static_cast<int>(sizeof(Key));
  size_t count[256];
  for (int pass = 0; pass < kPasses; ++pass) {
    const int shift = pass * 8;
    std::fill(std::begin(count), std::end(count), size_t(0));
    for (size_t i = 0; i < n; ++i) ++count[(keys[i] >> shift) & 0xff];
    if (count[(keys.empty() ? 0 : (keys[0] >> shift)) & 0xff] == n) continue;  // all equal digit
    size_t sum = 0;
    for (int d = 0; d < 256; ++d) {
      const size_t c = count[d];
      count[d] = sum;
      sum += c;
    }
    for (size_t i = 0; i < n; ++i) {
      const size_t dst = count[(keys[i] >> shift) & 0xff]++;
      keys_tmp[dst] = keys[i];
      pay_tmp[dst] = payload[i];
    }
    keys.swap(keys_tmp);
    payload.swap(pay_tmp);
  }
}

}  // namespace detail

struct BinResult {
  TileIndex tiles;
  std::vector<uint32_t> refs;  // splat indices, sorted by (tile id, depth, source order)
  uint64_t num_intersections = 0;
  size_t aux_bytes = 0;
  double binning_ms = 0, sort_ms = 0;
};

// Tile binning and sorting: one entry per (splat, overlapped 16x16 tile),
// ordered by tile id, then depth, then insertion (= source) order. Two stable
// radix passes over the composite key keep the tie-break exact for both float
// and double depth keys.
template <typename S>
BinResult bin_and_sort(const std::vector<Splat2D<S>>& splats, int width, int height) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  BinResult out;
  out.tiles.tiles_x = (width + kTileSize - 1) / kTileSize;
  out.tiles.tiles_y = (height + kTileSize - 1) / kTileSize;
  const int tiles_x = out.tiles.tiles_x, tiles_y = out.tiles.tiles_y;

  using DepthKey = decltype(detail::depth_key_bits(S(0)));
  std::vector<DepthKey> depth_keys;
  std::vector<uint64_t> tile_and_splat;  // tile id in the high 32 bits
  for (size_t i = 0; i < splats.size(); ++i) {
    const Splat2D<S>& sp = splats[i];
    const S r = S(sp.radius_px);
    const int tx0 = std::max(0, static_cast<int>(std::floor((sp.mean_px[0] - r) / kTileSize)));
    const int tx1 = std::min(tiles_x - 1, static_cast<int>(std::floor((sp.mean_px[0] + r) / kTileSize)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((sp.mean_px[1] - r) / kTileSize)));
    const int ty1 = std::min(tiles_y - 1, static_cast<int>(std::floor((sp.mean_px[1] + r) / kTileSize)));
    const DepthKey dk = detail::depth_key_bits(sp.depth);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) {
        const uint64_t tile = static_cast<uint64_t>(ty) * tiles_x + tx;
        depth_keys.push_back(dk);
        tile_and_splat.push_back((tile << 32) | static_cast<uint32_t>(i));
      }
  }
  out.num_intersections = depth_keys.size();
  const auto t1 = clock::now();

  detail::radix_sort_pairs(depth_keys, tile_and_splat);

  std::vector<uint32_t> tile_keys(tile_and_splat.size());
  std::vector<uint32_t> refs(tile_and_splat.size());
  for (size_t i = 0; i < tile_and_splat.size(); ++i) {
    tile_keys[i] = static_cast<uint32_t>(tile_and_splat[i] >> 32);
    refs[i] = static_cast<uint32_t>(tile_and_splat[i] & 0xffffffffu);
  }
  detail::radix_sort_pairs(tile_keys, refs);

  out.tiles.offsets.assign(static_cast<size_t>(tiles_x) * tiles_y + 1, 0);
  for (const uint32_t t : tile_keys) ++out.tiles.offsets[t + 1];
  for (size_t t = 1; t < out.tiles.offsets.size(); ++t) out.tiles.offsets[t] += out.tiles.offsets[t - 1];

  out.refs = std::move(refs);
  out.aux_bytes = depth_keys.capacity() * sizeof(DepthKey) +
                  tile_and_splat.capacity() * sizeof(uint64_t) +
                  tile_keys.capacity() * sizeof(uint32_t) + out.refs.capacity() * sizeof(uint32_t) +
                  out.tiles.offsets.capacity() * sizeof(uint32_t);
  const auto t2 = clock::now();
  out.binning_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out.sort_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  return out;
}

template <typename S>
struct RasterResult {
  ImageBuffer<S> image;
  std::vector<S> final_transmittance;   // per pixel
  std::vector<uint16_t> blend_count;    // contributions blended per pixel
};

// Front-to-back alpha blending over the sorted per-tile work lists. Tiles are
// independent, so this parallelizes over tiles without affecting the result.
template <typename S>
RasterResult<S> rasterize(const TileIndex& tiles, const std::vector<uint32_t>& refs,
                          const std::vector<Splat2D<S>>& splats, const Vec3<S>& background,
                          int width, int height, int threads = 0) {
  RasterResult<S> out;
  out.image = ImageBuffer<S>(width, height);
  out.final_transmittance.assign(static_cast<size_t>(width) * height, S(1));
  out.blend_count.assign(static_cast<size_t>(width) * height, 0);

  parallel_for(
      static_cast<int64_t>(tiles.num_tiles()),
      [&](int64_t t) {
        const int tx = static_cast<int>(t) % tiles.tiles_x;
        const int ty = static_cast<int>(t) / tiles.tiles_x;
        const uint32_t lo = tiles.offsets[t], hi = tiles.offsets[t + 1];
        const int px0 = tx * kTileSize, px1 = std::min(width, px0 + kTileSize);
        const int py0 = ty * kTileSize, py1 = std::min(height, py0 + kTileSize);
        for (int py = py0; py < py1; ++py)
          for (int px = px0; px < px1; ++px) {
            S trans = S(1);
            Vec3<S> color = Vec3<S>::Zero();
            uint16_t count = 0;
            for (uint32_t k = lo; k < hi; ++k) {
              const Splat2D<S>& sp = splats[refs[k]];
              const S dx = S(px) + S(0.5) - sp.mean_px[0];
              const S dy = S(py) + S(0.5) - sp.mean_px[1];
              const S power = S(-0.5) * (sp.conic[0] * dx * dx + sp.conic[2] * dy * dy) -
                              sp.conic[1] * dx * dy;
              if (power > S(0)) continue;
              const S alpha = std::min(S(blend::kAlphaClamp), sp.alpha_max * std::exp(power));
              if (alpha < S(blend::kAlphaSkip)) continue;
              const S next_trans = trans * (S(1) - alpha);
              if (next_trans < S(blend::kTransmittanceStop)) break;
              color += sp.color * (alpha * trans);
              trans = next_trans;
              ++count;
            }
            color += trans * background;
            out.image.set_rgb(px, py, color);
            const size_t pix = static_cast<size_t>(py) * width + px;
            out.final_transmittance[pix] = trans;
            out.blend_count[pix] = count;
          }
      },
      threads);
  return out;
}

// Everything the backward pass needs from a forward render.
template <typename S>
struct ForwardContext {
  Camera<S> camera;
  size_t scene_size = 0;
  int sh_degree = 3;
  Vec3<S> background = Vec3<S>::Zero();
  std::vector<Splat2D<S>> splats;
  std::vector<Vec3<S>> cam_points;
  TileIndex tiles;
  std::vector<uint32_t> refs;
  std::vector<S> final_transmittance;
  std::vector<uint16_t> blend_count;
};

template <typename S>
struct RenderResult {
  ImageBuffer<S> image;
  RenderStats stats;
  ForwardContext<S> context;
};

template <typename S>
RenderResult<S> render(const Scene<S>& scene, const Camera<S>& camera,
                       const RenderOptions<S>& options = {}) {
  using clock = std::chrono::steady_clock;
  const Vec3<S> background = options.background.value_or(scene.background);

  const auto t0 = clock::now();
  PreprocessResult<S> pre = preprocess(scene, camera, options);
  const auto t1 = clock::now();
  BinResult bins = bin_and_sort(pre.splats, camera.width, camera.height);
  const auto t2 = clock::now();
  RasterResult<S> raster = rasterize(bins.tiles, bins.refs, pre.splats, background, camera.width,
                                     camera.height, options.threads);
  const auto t3 = clock::now();

  RenderResult<S> out;
  out.stats.num_intersections = bins.num_intersections;
  out.stats.num_splats = static_cast<uint32_t>(pre.splats.size());
  out.stats.num_culled = pre.num_culled;
  out.stats.num_degenerate = pre.num_degenerate;
  const auto ms = [](auto a, auto b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  out.stats.preprocess_ms = ms(t0, t1);
  out.stats.binning_ms = bins.binning_ms;
  out.stats.sort_ms = bins.sort_ms;
  out.stats.raster_ms = ms(t2, t3);
  out.stats.peak_aux_bytes = pre.splats.capacity() * sizeof(Splat2D<S>) +
                             pre.cam_points.capacity() * sizeof(Vec3<S>) + bins.aux_bytes +
                             raster.final_transmittance.capacity() * sizeof(S) +
                             raster.blend_count.capacity() * sizeof(uint16_t);

  out.context.camera = camera;
  out.context.scene_size = scene.gaussians.size();
  out.context.sh_degree = options.sh_degree;
  out.context.background = background;
  out.context.splats = std::move(pre.splats);
  out.context.cam_points = std::move(pre.cam_points);
  out.context.tiles = std::move(bins.tiles);
  out.context.refs = std::move(bins.refs);
  out.context.final_transmittance = std::move(raster.final_transmittance);
  out.context.blend_count = std::move(raster.blend_count);
  out.image = std::move(raster.image);
  return out;
}

}  // namespace omnisplat
