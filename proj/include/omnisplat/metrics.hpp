// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "omnisplat/core.hpp"
#include "omnisplat/model.hpp"

namespace omnisplat {

namespace metrics_detail {

inline constexpr int kWindow = 11;
inline constexpr double kWindowSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

template <typename S>
std::array<S, kWindow> gaussian_window() {
  std::array<S, kWindow> w;
  S sum = S(0);
  for (int i = 0; i < kWindow; ++i) {
    const S d = S(i - kWindow / 2);
    w[i] = std::exp(-d * d / (S(2) * S(kWindowSigma) * S(kWindowSigma)));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable zero-padded Gaussian filter of one channel plane.
template <typename S>
std::vector<S> blur(const std::vector<S>& plane, int width, int height) {
  const auto w = gaussian_window<S>();
  constexpr int r = kWindow / 2;
  std::vector<S> tmp(plane.size(), S(0)), out(plane.size(), S(0));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      S acc = S(0);
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < width) acc += w[k + r] * plane[static_cast<size_t>(y) * width + xx];
      }
      tmp[static_cast<size_t>(y) * width + x] = acc;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      S acc = S(0);
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < height) acc += w[k + r] * tmp[static_cast<size_t>(yy) * width + x];
      }
      out[static_cast<size_t>(y) * width + x] = acc;
    }
  return out;
}

template <typename S>
std::vector<S> channel_plane(const ImageBuffer<S>& img, int ch) {
  std::vector<S> p(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < p.size(); ++i) p[i] = img.pixels[i * 3 + ch];
  return p;
}

}  // namespace metrics_detail

template <typename S>
S psnr(const ImageBuffer<S>& rendered, const ImageBuffer<S>& target) {
  if (!rendered.same_shape(target)) throw std::invalid_argument("psnr: image dimensions differ");
  S mse = S(0);
  for (size_t i = 0; i < rendered.pixels.size(); ++i) {
    const S d = rendered.pixels[i] - target.pixels[i];
    mse += d * d;
  }
  mse /= S(rendered.pixels.size());
  if (mse < S(1e-10)) return S(100);
  return std::min(S(100), S(10) * std::log10(S(1) / mse));
}

// Mean SSIM over the 11x11 Gaussian-window map, per channel, averaged.
// Optionally also returns d(mean SSIM)/d(rendered).
template <typename S>
S ssim(const ImageBuffer<S>& rendered, const ImageBuffer<S>& target,
       ImageBuffer<S>* d_rendered = nullptr) {
  using namespace metrics_detail;
  if (!rendered.same_shape(target)) throw std::invalid_argument("ssim: image dimensions differ");
  const int width = rendered.width, height = rendered.height;
  const size_t npx = static_cast<size_t>(width) * height;
  const S c1 = S(kSsimC1), c2 = S(kSsimC2);
  const S norm = S(1) / S(npx * 3);

  if (d_rendered) *d_rendered = ImageBuffer<S>(width, height);
  S total = S(0);
  for (int ch = 0; ch < 3; ++ch) {
    const std::vector<S> x = channel_plane(rendered, ch);
    const std::vector<S> y = channel_plane(target, ch);
    const std::vector<S> mu_x = blur(x, width, height);
    const std::vector<S> mu_y = blur(y, width, height);

    std::vector<S> xx(npx), yy(npx), xy(npx);
    for (size_t i = 0; i < npx; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const std::vector<S> mu_xx = blur(xx, width, height);
    const std::vector<S> mu_yy = blur(yy, width, height);
    const std::vector<S> mu_xy = blur(xy, width, height);

    // Per-pixel partials in difference-factored form: every map carries an
    // explicit (x - y)-type factor, so the gradient of SSIM(x, x) is exactly
    // zero and a render that matches its target is a true optimizer fixed
    // point.
    //   a = dS/dmu_x           = 2 N2 (mu_y - mu_x)(mu_y (mu_x + mu_y) + C1) / (D1^2 D2)
    //   b = dS/dsigma_x^2      = -S / D2
    //   e = dS/dsigma_xy + 2 b = 2 N1 (D2 - N2) / (D1 D2^2)
    std::vector<S> a_map, b_map, e_map, bdmu, emy;
    if (d_rendered) {
      a_map.resize(npx);
      b_map.resize(npx);
      e_map.resize(npx);
      bdmu.resize(npx);
      emy.resize(npx);
    }
    for (size_t i = 0; i < npx; ++i) {
      const S sx2 = mu_xx[i] - mu_x[i] * mu_x[i];
      const S sy2 = mu_yy[i] - mu_y[i] * mu_y[i];
      const S sxy = mu_xy[i] - mu_x[i] * mu_y[i];
      const S n1 = S(2) * mu_x[i] * mu_y[i] + c1;
      const S n2 = S(2) * sxy + c2;
      const S d1 = mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1;
      const S d2 = sx2 + sy2 + c2;
      const S s = (n1 * n2) / (d1 * d2);
      total += s;
      if (d_rendered) {
        a_map[i] = S(2) * n2 * (mu_y[i] - mu_x[i]) * (mu_y[i] * (mu_x[i] + mu_y[i]) + c1) /
                   (d1 * d1 * d2);
        b_map[i] = -s / d2;
        e_map[i] = S(2) * n1 * (d2 - n2) / (d1 * d2 * d2);
        bdmu[i] = b_map[i] * (mu_x[i] - mu_y[i]);
        emy[i] = e_map[i] * mu_y[i];
      }
    }
    if (d_rendered) {
      const std::vector<S> ca = blur(a_map, width, height);
      const std::vector<S> cb = blur(b_map, width, height);
      const std::vector<S> cbdmu = blur(bdmu, width, height);
      const std::vector<S> ce = blur(e_map, width, height);
      const std::vector<S> cemy = blur(emy, width, height);
      for (size_t i = 0; i < npx; ++i) {
        d_rendered->pixels[i * 3 + ch] =
            norm * (ca[i] + S(2) * (x[i] - y[i]) * cb[i] - S(2) * cbdmu[i] + y[i] * ce[i] - cemy[i]);
      }
    }
  }
  return total * norm;
}

template <typename S>
struct LossResult {
  S total = S(0);
  S l1 = S(0);     // mean absolute difference over all pixel-channels
  S dssim = S(0);  // 1 - SSIM
  ImageBuffer<S> d_rendered;
};

// Training loss L = (1 - lambda) L1 + lambda (1 - SSIM) with its exact image
// gradient.
template <typename S>
LossResult<S> l1_dssim_loss(const ImageBuffer<S>& rendered, const ImageBuffer<S>& target,
                            S lambda = S(0.2)) {
  if (!rendered.same_shape(target))
    throw std::invalid_argument("l1_dssim_loss: image dimensions differ");
  LossResult<S> out;
  const S norm = S(1) / S(rendered.pixels.size());

  ImageBuffer<S> d_ssim;
  const S ssim_value = ssim(rendered, target, &d_ssim);
  out.dssim = S(1) - ssim_value;

  out.d_rendered = ImageBuffer<S>(rendered.width, rendered.height);
  for (size_t i = 0; i < rendered.pixels.size(); ++i) {
    const S diff = rendered.pixels[i] - target.pixels[i];
    out.l1 += std::abs(diff);
    const S sign = diff > S(0) ? S(1) : (diff < S(0) ? S(-1) : S(0));
    out.d_rendered.pixels[i] = (S(1) - lambda) * sign * norm - lambda * d_ssim.pixels[i];
  }
  out.l1 *= norm;
  out.total = (S(1) - lambda) * out.l1 + lambda * out.dssim;
  return out;
}

}  // namespace omnisplat
