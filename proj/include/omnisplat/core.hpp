// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>

namespace omnisplat {

template <typename S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <typename S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Mat23 = Eigen::Matrix<S, 2, 3>;

// Spherical-harmonic color coefficients, one row per basis function
// (degree 0..3,16 rows), one column per RGB channel.
template <typename S> using ShCoeffs = Eigen::Matrix<S, 16, 3>;

template <typename S> constexpr S pi() { return S(3.141592653589793238462643383279502884L); }

inline constexpr double deg_to_rad(double deg) { return deg * 3.141592653589793238462643383279502884 / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / 3.141592653589793238462643383279502884; }

template <typename S> S sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S> S logit(S p) { return std::log(p / (S(1) - p)); }

// Rasterization constants inherited from the reference 3DGS renderer. They are
// part of the forward model definition, so the oracle renderer reuses the same
// values (constants are shared; code paths are not).
namespace blend {
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1.0e-4;
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kRadiusSigma = 3.0;
}  // namespace blend

inline constexpr int kTileSize = 16;
inline constexpr double kPinholeNearClip = 0.2;
inline constexpr double kFisheyeCullMarginRad = 10.0 * 3.141592653589793238462643383279502884 / 180.0;

}  // namespace omnisplat
