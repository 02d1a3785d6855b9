// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <stdexcept>

#include "omnisplat/core.hpp"

namespace omnisplat {

enum class CameraModel { Pinhole, FisheyeEquidistant, Panorama };

inline const char* camera_model_name(CameraModel m) {
  switch (m) {
    case CameraModel::Pinhole: return "pinhole";
    case CameraModel::FisheyeEquidistant: return "fisheye_equidistant";
    case CameraModel::Panorama: return "panorama";
  }
  return "unknown";
}

// Evaluation path selector for the fisheye on-axis singularity. Auto switches
// to the Taylor series near the axis; the forced modes exist so tests can
// compare the two paths at the same point.
enum class AxisMode { Auto, ForceSeries, ForceGeneral };

template <typename S>
struct Camera {
  CameraModel model = CameraModel::Pinhole;
  int width = 0, height = 0;
  S fx = S(0), fy = S(0), cx = S(0), cy = S(0);
  Mat3<S> rotation_wc = Mat3<S>::Identity();   // world -> camera
  Vec3<S> translation_wc = Vec3<S>::Zero();
  S fov_max = pi<S>() / S(2);                  // culling half-angle (fisheye)

  static Camera pinhole(int w, int h, S fx_, S fy_, S cx_, S cy_) {
    Camera c;
    c.model = CameraModel::Pinhole;
    c.width = w; c.height = h;
    c.fx = fx_; c.fy = fy_; c.cx = cx_; c.cy = cy_;
    return c;
  }
  static Camera fisheye(int w, int h, S fx_, S fy_, S cx_, S cy_, S fov_max_ = pi<S>() / S(2)) {
    Camera c;
    c.model = CameraModel::FisheyeEquidistant;
    c.width = w; c.height = h;
    c.fx = fx_; c.fy = fy_; c.cx = cx_; c.cy = cy_;
    c.fov_max = fov_max_;
    return c;
  }
  static Camera panorama(int w, int h) {
    Camera c;
    c.model = CameraModel::Panorama;
    c.width = w; c.height = h;
    return c;
  }

  Vec3<S> center() const { return -rotation_wc.transpose() * translation_wc; }

  template <typename T>
  Camera<T> cast() const {
    Camera<T> c;
    c.model = model;
    c.width = width; c.height = height;
    c.fx = static_cast<T>(fx); c.fy = static_cast<T>(fy);
    c.cx = static_cast<T>(cx); c.cy = static_cast<T>(cy);
    c.rotation_wc = rotation_wc.template cast<T>();
    c.translation_wc = translation_wc.template cast<T>();
    c.fov_max = static_cast<T>(fov_max);
    return c;
  }
};

template <typename S>
Vec3<S> world_to_camera(const Vec3<S>& mean_world, const Camera<S>& camera) {
  return camera.rotation_wc * mean_world + camera.translation_wc;
}

template <typename S>
struct ProjectionResult {
  Vec2<S> pixel = Vec2<S>::Zero();
  Mat23<S> jacobian = Mat23<S>::Zero();
  bool visible = false;
};

namespace detail {

// Radially symmetric pieces of the equidistant projection. With
// l_z^2 = x^2 + y^2 and theta = atan2(l_z, z):
//   g = theta / l_z            (pixel = c + f g (x, y))
//   u = (1/x) dg/dx            (so dg/dx = x u, dg/dy = y u)
//   U = (1/x) du/dx
// All three are 0/0 at the axis; the series path evaluates them there. The
// series is used whenever l_z < 1e-3 |z| (z > 0) — at that radius its
// truncation error is below double epsilon while the general expressions start
// losing digits to cancellation.
template <typename S>
struct FisheyeTerms {
  S g, u, U;
};

inline constexpr double kFisheyeSeriesW2 = 1.0e-6;  // (l_z / z)^2 switch point

template <typename S>
FisheyeTerms<S> fisheye_terms(S lz2, S z, AxisMode mode = AxisMode::Auto) {
  const S z2 = z * z;
  const bool series = mode == AxisMode::ForceSeries ||
                      (mode == AxisMode::Auto && z > S(0) && lz2 < S(kFisheyeSeriesW2) * z2);
  FisheyeTerms<S> t;
  if (series) {
    const S w2 = lz2 / z2;
    const S z3 = z2 * z, z5 = z3 * z2;
    t.g = (S(1) - w2 / S(3) + w2 * w2 / S(5) - w2 * w2 * w2 / S(7)) / z;
    t.u = (S(-2) / S(3) + S(4) / S(5) * w2 - S(6) / S(7) * w2 * w2) / z3;
    t.U = (S(8) / S(5) - S(24) / S(7) * w2 + S(16) / S(3) * w2 * w2) / z5;
  } else {
    const S lz = std::sqrt(lz2);
    const S r2 = lz2 + z2;
    const S theta = std::atan2(lz, z);
    t.g = theta / lz;
    t.u = z / (lz2 * r2) - theta / (lz2 * lz);
    t.U = S(3) * theta / (lz2 * lz2 * lz) - z / (r2 * lz2 * lz2) -
          S(2) * z * (r2 + lz2) / (lz2 * lz2 * r2 * r2);
  }
  return t;
}

}  // namespace detail

template <typename S>
Mat23<S> projection_jacobian(const Vec3<S>& point, const Camera<S>& camera,
                             AxisMode mode = AxisMode::Auto);

// Projective transform phi per camera model. The pixel is computed for any
// non-degenerate point; `visible` additionally applies the model's culling
// rule (fisheye FOV margin, pinhole near clip).
template <typename S>
ProjectionResult<S> project(const Vec3<S>& point, const Camera<S>& camera,
                            AxisMode mode = AxisMode::Auto) {
  ProjectionResult<S> res;
  const S x = point[0], y = point[1], z = point[2];
  const S r2 = point.squaredNorm();
  if (r2 < S(1e-24)) return res;  // point at the camera origin

  switch (camera.model) {
    case CameraModel::Pinhole: {
      if (std::abs(z) < S(1e-12)) return res;
      res.pixel = Vec2<S>(camera.cx + camera.fx * x / z, camera.cy + camera.fy * y / z);
      res.visible = z > S(kPinholeNearClip);
      break;
    }
    case CameraModel::FisheyeEquidistant: {
      const S lz2 = x * x + y * y;
      if (z < S(0) && lz2 < S(1e-24) * z * z) return res;  // backward axis: no finite pixel
      const S theta = std::atan2(std::sqrt(lz2), z);
      const S g = detail::fisheye_terms(lz2, z, mode).g;
      res.pixel = Vec2<S>(camera.cx + camera.fx * g * x, camera.cy + camera.fy * g * y);
      res.visible = theta <= camera.fov_max + S(kFisheyeCullMarginRad);
      break;
    }
    case CameraModel::Panorama: {
      const S s = x * x + z * z;
      if (s < S(1e-24) * y * y) return res;  // pole: the Jacobian is singular there
      const S w = S(camera.width), h = S(camera.height);
      S xp = w * (std::atan2(x, z) + pi<S>()) / (S(2) * pi<S>());
      if (xp >= w) xp -= w;  // atan2 == pi wraps to azimuth 0
      const S yp = h * (std::atan2(y, std::sqrt(s)) + pi<S>() / S(2)) / pi<S>();
      res.pixel = Vec2<S>(xp, yp);
      res.visible = true;
      break;
    }
  }
  if (res.visible) res.jacobian = projection_jacobian(point, camera, mode);
  return res;
}

// d(pixel)/d(point), the Jacobian J_phi of the projective transform.
template <typename S>
Mat23<S> projection_jacobian(const Vec3<S>& point, const Camera<S>& camera, AxisMode mode) {
  const S x = point[0], y = point[1], z = point[2];
  Mat23<S> j;
  switch (camera.model) {
    case CameraModel::Pinhole: {
      const S iz = S(1) / z;
      j << camera.fx * iz, S(0), -camera.fx * x * iz * iz,
           S(0), camera.fy * iz, -camera.fy * y * iz * iz;
      break;
    }
    case CameraModel::FisheyeEquidistant: {
      const S lz2 = x * x + y * y;
      const S r2 = lz2 + z * z;
      const auto t = detail::fisheye_terms(lz2, z, mode);
      const S fx = camera.fx, fy = camera.fy;
      j << fx * (t.g + x * x * t.u), fx * x * y * t.u, -fx * x / r2,
           fy * x * y * t.u, fy * (t.g + y * y * t.u), -fy * y / r2;
      break;
    }
    case CameraModel::Panorama: {
      const S s = x * x + z * z;
      const S rho = std::sqrt(s);
      const S r2 = s + y * y;
      const S cw = S(camera.width) / (S(2) * pi<S>());
      const S dh = S(camera.height) / pi<S>();
      j << cw * z / s, S(0), -cw * x / s,
           -dh * x * y / (rho * r2), dh * rho / r2, -dh * y * z / (rho * r2);
      break;
    }
  }
  return j;
}

// Derivative tensor of the Jacobian: (dJ/dx_c, dJ/dy_c, dJ/dz_c). Needed to
// backpropagate through the covariance projection because J depends on the
// camera-space mean.
template <typename S>
std::array<Mat23<S>, 3> projection_jacobian_grad(const Vec3<S>& point, const Camera<S>& camera,
                                                 AxisMode mode = AxisMode::Auto) {
  const S x = point[0], y = point[1], z = point[2];
  std::array<Mat23<S>, 3> d;
  switch (camera.model) {
    case CameraModel::Pinhole: {
      const S iz2 = S(1) / (z * z);
      const S fx = camera.fx, fy = camera.fy;
      d[0] << S(0), S(0), -fx * iz2, S(0), S(0), S(0);
      d[1] << S(0), S(0), S(0), S(0), S(0), -fy * iz2;
      d[2] << -fx * iz2, S(0), S(2) * fx * x * iz2 / z,
              S(0), -fy * iz2, S(2) * fy * y * iz2 / z;
      break;
    }
    case CameraModel::FisheyeEquidistant: {
      const S lz2 = x * x + y * y;
      const S r2 = lz2 + z * z;
      const S ir4 = S(1) / (r2 * r2);
      const auto t = detail::fisheye_terms(lz2, z, mode);
      const S fx = camera.fx, fy = camera.fy;
      const S x2 = x * x, y2 = y * y;
      const S ux = t.u + x2 * t.U;  // d(x u)/dx etc. share these
      const S uy = t.u + y2 * t.U;
      d[0] << fx * x * (S(3) * t.u + x2 * t.U), fx * y * ux, fx * (S(2) * x2 - r2) * ir4,
              fy * y * ux, fy * x * uy, S(2) * fy * x * y * ir4;
      d[1] << fx * y * ux, fx * x * uy, S(2) * fx * x * y * ir4,
              fy * x * uy, fy * y * (S(3) * t.u + y2 * t.U), fy * (S(2) * y2 - r2) * ir4;
      d[2] << fx * (S(2) * x2 - r2) * ir4, S(2) * fx * x * y * ir4, S(2) * fx * x * z * ir4,
              S(2) * fy * x * y * ir4, fy * (S(2) * y2 - r2) * ir4, S(2) * fy * y * z * ir4;
      break;
    }
    case CameraModel::Panorama: {
      const S s = x * x + z * z;
      const S rho = std::sqrt(s);
      const S r2 = s + y * y;
      const S cw = S(camera.width) / (S(2) * pi<S>());
      const S dh = S(camera.height) / pi<S>();
      const S is2 = S(1) / (s * s);
      const S e = S(1) / (rho * r2);                        // 1 / (rho r2)
      const S f = (r2 + S(2) * s) / (rho * s * r2 * r2);    // -(1/x) dE/dx
      const S ey = S(2) * y / (rho * r2 * r2);              // -dE/dy
      d[0] << S(-2) * cw * x * z * is2, S(0), cw * (x * x - z * z) * is2,
              -dh * y * (e - x * x * f), dh * x * (y * y - s) / (rho * r2 * r2),
              dh * x * y * z * f;
      d[1] << S(0), S(0), S(0),
              -dh * x * (e - y * ey), S(-2) * dh * rho * y / (r2 * r2), -dh * z * (e - y * ey);
      d[2] << cw * (x * x - z * z) * is2, S(0), S(2) * cw * x * z * is2,
              dh * x * y * z * f, dh * z * (y * y - s) / (rho * r2 * r2),
              -dh * y * (e - z * z * f);
      break;
    }
  }
  return d;
}

// Inverse of `project` up to scale: the unit view direction hitting the pixel.
template <typename S>
Vec3<S> unproject_direction(const Vec2<S>& pixel, const Camera<S>& camera) {
  switch (camera.model) {
    case CameraModel::Pinhole: {
      const Vec3<S> d((pixel[0] - camera.cx) / camera.fx, (pixel[1] - camera.cy) / camera.fy, S(1));
      return d.normalized();
    }
    case CameraModel::FisheyeEquidistant: {
      const S a = (pixel[0] - camera.cx) / camera.fx;
      const S b = (pixel[1] - camera.cy) / camera.fy;
      const S theta = std::sqrt(a * a + b * b);
      if (theta > pi<S>())
        throw std::invalid_argument("unproject_direction: fisheye pixel radius implies theta > pi");
      if (theta < S(1e-12)) return Vec3<S>(S(0), S(0), S(1));
      const S st = std::sin(theta) / theta;
      return Vec3<S>(st * a, st * b, std::cos(theta));
    }
    case CameraModel::Panorama: {
      const S lon = S(2) * pi<S>() * pixel[0] / S(camera.width) - pi<S>();
      const S lat = pi<S>() * pixel[1] / S(camera.height) - pi<S>() / S(2);
      const S cl = std::cos(lat);
      return Vec3<S>(cl * std::sin(lon), std::sin(lat), cl * std::cos(lon));
    }
  }
  return Vec3<S>(S(0), S(0), S(1));
}

}  // namespace omnisplat
