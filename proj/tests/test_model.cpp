// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "omnisplat/model.hpp"

using namespace omnisplat;

namespace {

std::mt19937_64 rng(42);

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec4<double> random_quat(bool unit = true) {
  Vec4<double> q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = uniform(-1, 1);
  } while (q.norm() < 0.1);
  return unit ? Vec4<double>(q / q.norm()) : q;
}

// Independent oracle: explicit quaternion-to-matrix via Eigen, then two
// matrix products.
Mat3<double> covariance_oracle(const Vec4<double>& q, const Vec3<double>& s) {
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  const Mat3<double> r = quat.normalized().toRotationMatrix();
  const Mat3<double> d = Vec3<double>((2.0 * s).array().exp()).asDiagonal();
  return r * d * r.transpose();
}

}  // namespace

TEST_CASE("build_covariance identity inputs") {
  const Mat3<double> sigma = build_covariance<double>(Vec4<double>(1, 0, 0, 0), Vec3<double>::Zero());
  CHECK((sigma - Mat3<double>::Identity()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("build_covariance diagonal scaling") {
  const Mat3<double> sigma =
      build_covariance<double>(Vec4<double>(1, 0, 0, 0), Vec3<double>(std::log(2.0), 0, 0));
  Mat3<double> expected = Mat3<double>::Identity();
  expected(0, 0) = 4.0;
  CHECK((sigma - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("build_covariance matches the quaternion-matrix oracle") {
  for (int trial = 0; trial < 200; ++trial) {
    const Vec4<double> q = random_quat(false);
    const Vec3<double> s(uniform(-1.5, 1.0), uniform(-1.5, 1.0), uniform(-1.5, 1.0));
    const Mat3<double> sigma = build_covariance(q, s);
    CHECK((sigma - covariance_oracle(q, s)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("build_covariance output is exactly symmetric and PSD") {
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4<double> q = random_quat(false);
    const Vec3<double> s(uniform(-2, 1), uniform(-2, 1), uniform(-2, 1));
    const Mat3<double> sigma = build_covariance(q, s);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(sigma(i, j) == sigma(j, i));
    const Eigen::SelfAdjointEigenSolver<Mat3<double>> es(sigma);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("build_covariance is invariant to quaternion sign") {
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4<double> q = random_quat();
    const Vec3<double> s(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    const Mat3<double> a = build_covariance(q, s);
    const Mat3<double> b = build_covariance<double>(-q, s);
    CHECK((a - b).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("trace grows with any log-scale component") {
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4<double> q = random_quat();
    Vec3<double> s(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    const double base = build_covariance(q, s).trace();
    for (int c = 0; c < 3; ++c) {
      Vec3<double> s2 = s;
      s2[c] += 0.1;
      CHECK(build_covariance(q, s2).trace() >= base);
    }
  }
}

TEST_CASE("zero quaternion is rejected") {
  CHECK_THROWS_WITH_AS(build_covariance<double>(Vec4<double>::Zero(), Vec3<double>::Zero()),
                       doctest::Contains("degenerate rotation"), std::invalid_argument);
  CHECK_THROWS_AS(build_covariance_backward<double>(Vec4<double>::Zero(), Vec3<double>::Zero(),
                                                    Mat3<double>::Identity()),
                  std::invalid_argument);
}

TEST_CASE("build_covariance_backward zero cotangent") {
  const auto [dq, ds] =
      build_covariance_backward<double>(random_quat(), Vec3<double>(0.3, -0.2, 0.1), Mat3<double>::Zero());
  CHECK(dq.norm() == 0.0);
  CHECK(ds.norm() == 0.0);
}

TEST_CASE("build_covariance_backward trace gradient at identity") {
  // d tr(Sigma) / d s_i = 2 exp(2 s_i) = 2 at s = 0
  const auto [dq, ds] = build_covariance_backward<double>(Vec4<double>(1, 0, 0, 0),
                                                          Vec3<double>::Zero(), Mat3<double>::Identity());
  CHECK(ds[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ds[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ds[2] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(dq.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_covariance_backward matches finite differences") {
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec4<double> q = random_quat(false);
    const Vec3<double> s(uniform(-1, 0.5), uniform(-1, 0.5), uniform(-1, 0.5));
    Mat3<double> g;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) g(i, j) = g(j, i) = uniform(-1, 1);

    const auto [dq, ds] = build_covariance_backward(q, s, g);
    const auto loss = [&](const Vec4<double>& qq, const Vec3<double>& ss) {
      return g.cwiseProduct(build_covariance(qq, ss)).sum();
    };
    for (int c = 0; c < 4; ++c) {
      Vec4<double> qp = q, qm = q;
      qp[c] += h;
      qm[c] -= h;
      const double fd = (loss(qp, s) - loss(qm, s)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(dq[c]), 1e-8});
      CHECK(std::abs(fd - dq[c]) / denom < 1e-6);
    }
    for (int c = 0; c < 3; ++c) {
      Vec3<double> sp = s, sm = s;
      sp[c] += h;
      sm[c] -= h;
      const double fd = (loss(q, sp) - loss(q, sm)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(ds[c]), 1e-8});
      CHECK(std::abs(fd - ds[c]) / denom < 1e-6);
    }
  }
}

TEST_CASE("eval_sh degree 0 is the offset DC band") {
  ShCoeffs<double> sh = ShCoeffs<double>::Zero();
  sh(0, 0) = 0.7;
  sh(0, 1) = -0.4;
  sh(0, 2) = 1.1;
  const Vec3<double> dir = Vec3<double>(0.3, -0.5, 0.9).normalized();
  const Vec3<double> c = eval_sh(sh, dir, 0);
  CHECK(c[0] == doctest::Approx(0.28209479177387814 * 0.7 + 0.5).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.28209479177387814 * -0.4 + 0.5).epsilon(1e-12));
  CHECK(c[2] == doctest::Approx(0.28209479177387814 * 1.1 + 0.5).epsilon(1e-12));

  const Vec3<double> gray = eval_sh(ShCoeffs<double>::Zero().eval(), dir, 0);
  CHECK((gray - Vec3<double>(0.5, 0.5, 0.5)).norm() == 0.0);
}

TEST_CASE("eval_sh degree 3 matches a published basis table at +z") {
  // Real SH basis evaluated at direction (0, 0, 1), written out term by term
  // from the standard table: only Y00, Y10, Y20, Y30 are nonzero there.
  ShCoeffs<double> sh;
  for (int i = 0; i < 16; ++i)
    for (int c = 0; c < 3; ++c) sh(i, c) = uniform(-1, 1);
  const Vec3<double> dir(0, 0, 1);
  const Vec3<double> got = eval_sh(sh, dir, 3);
  for (int c = 0; c < 3; ++c) {
    const double y00 = 0.282094791773878;
    const double y10 = 0.488602511902920;        // sqrt(3/(4 pi)) z
    const double y20 = 0.315391565252520 * 2.0;  // (1/4) sqrt(5/pi) (3z^2 - 1) at z=1 -> 2 * coeff
    const double y30 = 0.373176332590115 * 2.0;  // (1/4) sqrt(7/pi) (5z^3 - 3z) at z=1 -> 2 * coeff
    const double expected =
        std::max(y00 * sh(0, c) + y10 * sh(2, c) + y20 * sh(6, c) + y30 * sh(12, c) + 0.5, 0.0);
    CHECK(got[c] == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("eval_sh clamps below zero and the DC gradient respects the clamp") {
  ShCoeffs<double> sh = ShCoeffs<double>::Zero();
  sh(0, 0) = -10.0;  // drives channel 0 below zero
  sh(0, 1) = 0.2;
  const Vec3<double> dir(0, 0, 1);
  const Vec3<double> c = eval_sh(sh, dir, 0);
  CHECK(c[0] == 0.0);
  CHECK(c[1] > 0.0);

  const Vec3<double> d = eval_sh_dc_backward(sh, dir, 0, Vec3<double>(1, 1, 1));
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(0.28209479177387814));
  CHECK(d[2] == doctest::Approx(0.28209479177387814));
}
