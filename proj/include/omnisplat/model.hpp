// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <stdexcept>
#include <utility>
#include <vector>

#include "omnisplat/core.hpp"

namespace omnisplat {

// One anisotropic 3D Gaussian primitive. The quaternion is stored unnormalized
// (w, x, y, z) and normalized wherever it enters the math; scales are stored as
// logs and opacity as a logit so optimization stays unconstrained.
template <typename S>
struct Gaussian3D {
  Vec3<S> mean = Vec3<S>::Zero();
  Vec4<S> rotation = Vec4<S>(S(1), S(0), S(0), S(0));
  Vec3<S> log_scale = Vec3<S>::Zero();
  S opacity_logit = S(0);
  ShCoeffs<S> sh = ShCoeffs<S>::Zero();

  template <typename T>
  Gaussian3D<T> cast() const {
    Gaussian3D<T> g;
    g.mean = mean.template cast<T>();
    g.rotation = rotation.template cast<T>();
    g.log_scale = log_scale.template cast<T>();
    g.opacity_logit = static_cast<T>(opacity_logit);
    g.sh = sh.template cast<T>();
    return g;
  }
};

template <typename S>
struct Scene {
  std::vector<Gaussian3D<S>> gaussians;
  Vec3<S> background = Vec3<S>::Zero();

  template <typename T>
  Scene<T> cast() const {
    Scene<T> s;
    s.gaussians.reserve(gaussians.size());
    for (const auto& g : gaussians) s.gaussians.push_back(g.template cast<T>());
    s.background = background.template cast<T>();
    return s;
  }
};

// Row-major RGB raster in [0,1].
template <typename S>
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<S> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, S(0)) {}

  static ImageBuffer constant(int w, int h, const Vec3<S>& rgb) {
    ImageBuffer img(w, h);
    for (int i = 0; i < w * h; ++i)
      for (int c = 0; c < 3; ++c) img.pixels[static_cast<size_t>(i) * 3 + c] = rgb[c];
    return img;
  }

  S& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  S at(int x, int y, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  Vec3<S> rgb(int x, int y) const {
    const size_t o = (static_cast<size_t>(y) * width + x) * 3;
    return Vec3<S>(pixels[o], pixels[o + 1], pixels[o + 2]);
  }
  void set_rgb(int x, int y, const Vec3<S>& v) {
    const size_t o = (static_cast<size_t>(y) * width + x) * 3;
    pixels[o] = v[0];
    pixels[o + 1] = v[1];
    pixels[o + 2] = v[2];
  }

  bool same_shape(const ImageBuffer& o) const { return width == o.width && height == o.height; }

  template <typename T>
  ImageBuffer<T> cast() const {
    ImageBuffer<T> img(width, height);
    for (size_t i = 0; i < pixels.size(); ++i) img.pixels[i] = static_cast<T>(pixels[i]);
    return img;
  }
};

// Rotation matrix of the normalized quaternion (w, x, y, z).
template <typename S>
Mat3<S> quaternion_to_rotation(const Vec4<S>& q) {
  const S n2 = q.squaredNorm();
  if (!(n2 > S(0))) throw std::invalid_argument("degenerate rotation: quaternion has zero norm");
  const S n = std::sqrt(n2);
  const S w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3<S> r;
  r << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
      S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
      S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
  return r;
}

namespace detail {

// Partials of the rotation matrix w.r.t. the normalized quaternion components.
template <typename S>
std::array<Mat3<S>, 4> rotation_quaternion_partials(const Vec4<S>& qn) {
  const S w = qn[0], x = qn[1], y = qn[2], z = qn[3];
  std::array<Mat3<S>, 4> d;
  d[0] << S(0), -z, y, z, S(0), -x, -y, x, S(0);
  d[1] << S(0), y, z, y, S(-2) * x, -w, z, w, S(-2) * x;
  d[2] << S(-2) * y, x, w, x, S(0), z, -w, z, S(-2) * y;
  d[3] << S(-2) * z, -w, x, w, S(-2) * z, y, x, y, S(0);
  for (auto& m : d) m *= S(2);
  return d;
}

}  // namespace detail

// Sigma = R * diag(exp(2 s)) * R^T for the stored (unnormalized) quaternion and
// log-scales. The result is exactly symmetric by construction.
template <typename S>
Mat3<S> build_covariance(const Vec4<S>& rotation, const Vec3<S>& log_scale) {
  const Mat3<S> r = quaternion_to_rotation(rotation);
  const Vec3<S> scale = log_scale.array().exp().matrix();
  const Mat3<S> m = r * scale.asDiagonal();
  Mat3<S> sigma;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const S v = m.row(i).dot(m.row(j));
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
  return sigma;
}

// Gradients of a scalar loss w.r.t. the stored quaternion and log-scales given
// the loss gradient w.r.t. Sigma.
template <typename S>
std::pair<Vec4<S>, Vec3<S>> build_covariance_backward(const Vec4<S>& rotation,
                                                      const Vec3<S>& log_scale,
                                                      const Mat3<S>& dl_dsigma) {
  const S n2 = rotation.squaredNorm();
  if (!(n2 > S(0))) throw std::invalid_argument("degenerate rotation: quaternion has zero norm");
  const S n = std::sqrt(n2);
  const Vec4<S> qn = rotation / n;

  const Mat3<S> r = quaternion_to_rotation(rotation);
  const Vec3<S> scale = log_scale.array().exp().matrix();
  const Mat3<S> m = r * scale.asDiagonal();

  // Sigma = M M^T with M = R S.
  const Mat3<S> dl_dm = (dl_dsigma + dl_dsigma.transpose()) * m;
  const Mat3<S> dl_dr = dl_dm * scale.asDiagonal();

  Vec3<S> dl_dlog_scale;
  for (int i = 0; i < 3; ++i) dl_dlog_scale[i] = scale[i] * r.col(i).dot(dl_dm.col(i));

  const auto dr = detail::rotation_quaternion_partials(qn);
  Vec4<S> dl_dqn;
  for (int k = 0; k < 4; ++k) dl_dqn[k] = dl_dr.cwiseProduct(dr[k]).sum();

  // Chain through q_n = q / |q|.
  const Vec4<S> dl_dq = (dl_dqn - qn * qn.dot(dl_dqn)) / n;
  return {dl_dq, dl_dlog_scale};
}

namespace sh {

inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                  -1.0925484305920792, 0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                                  0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};

}  // namespace sh

// Real spherical-harmonic color evaluation in the vanilla-3DGS convention:
// basis-weighted sum, offset by +0.5, clamped at 0 from below.
template <typename S>
Vec3<S> eval_sh(const ShCoeffs<S>& coeffs, const Vec3<S>& dir, int degree) {
  Vec3<S> c = S(sh::kC0) * coeffs.row(0).transpose();
  if (degree >= 1) {
    const S x = dir[0], y = dir[1], z = dir[2];
    c += -S(sh::kC1) * y * coeffs.row(1).transpose() + S(sh::kC1) * z * coeffs.row(2).transpose() -
         S(sh::kC1) * x * coeffs.row(3).transpose();
    if (degree >= 2) {
      const S xx = x * x, yy = y * y, zz = z * z;
      const S xy = x * y, yz = y * z, xz = x * z;
      c += S(sh::kC2[0]) * xy * coeffs.row(4).transpose() +
           S(sh::kC2[1]) * yz * coeffs.row(5).transpose() +
           S(sh::kC2[2]) * (S(2) * zz - xx - yy) * coeffs.row(6).transpose() +
           S(sh::kC2[3]) * xz * coeffs.row(7).transpose() +
           S(sh::kC2[4]) * (xx - yy) * coeffs.row(8).transpose();
      if (degree >= 3) {
        c += S(sh::kC3[0]) * y * (S(3) * xx - yy) * coeffs.row(9).transpose() +
             S(sh::kC3[1]) * xy * z * coeffs.row(10).transpose() +
             S(sh::kC3[2]) * y * (S(4) * zz - xx - yy) * coeffs.row(11).transpose() +
             S(sh::kC3[3]) * z * (S(2) * zz - S(3) * xx - S(3) * yy) * coeffs.row(12).transpose() +
             S(sh::kC3[4]) * x * (S(4) * zz - xx - yy) * coeffs.row(13).transpose() +
             S(sh::kC3[5]) * z * (xx - yy) * coeffs.row(14).transpose() +
             S(sh::kC3[6]) * x * (xx - yy) * coeffs.row(15).transpose();
      }
    }
  }
  c.array() += S(0.5);
  return c.cwiseMax(S(0));
}

// Gradient of eval_sh w.r.t. the DC coefficients only (channels clamped at zero
// contribute nothing).
template <typename S>
Vec3<S> eval_sh_dc_backward(const ShCoeffs<S>& coeffs, const Vec3<S>& dir, int degree,
                            const Vec3<S>& dl_dcolor) {
  const Vec3<S> color = eval_sh(coeffs, dir, degree);
  Vec3<S> d = Vec3<S>::Zero();
  for (int ch = 0; ch < 3; ++ch)
    if (color[ch] > S(0)) d[ch] = S(sh::kC0) * dl_dcolor[ch];
  return d;
}

}  // namespace omnisplat
