// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "omnisplat/cameras.hpp"
#include "omnisplat/oracle.hpp"

using namespace omnisplat;

namespace {

std::mt19937_64 rng(7);

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Camera<double> test_camera(CameraModel model) {
  switch (model) {
    case CameraModel::Pinhole:
      return Camera<double>::pinhole(640, 480, 320.0, 300.0, 321.5, 239.0);
    case CameraModel::FisheyeEquidistant:
      return Camera<double>::fisheye(640, 480, 190.0, 185.0, 320.0, 240.0, pi<double>() / 2);
    case CameraModel::Panorama:
      return Camera<double>::panorama(800, 400);
  }
  return {};
}

// Random point that `project` reports visible for the model (poles and the
// seam avoided for panorama so finite differences stay smooth).
Vec3<double> random_visible_point(CameraModel model) {
  while (true) {
    Vec3<double> p;
    switch (model) {
      case CameraModel::Pinhole:
        p = Vec3<double>(uniform(-2, 2), uniform(-2, 2), uniform(0.5, 8));
        break;
      case CameraModel::FisheyeEquidistant: {
        const double theta = uniform(0.02, 1.5);
        const double phi = uniform(0, 2 * pi<double>());
        p = uniform(0.5, 8) * Vec3<double>(std::sin(theta) * std::cos(phi),
                                           std::sin(theta) * std::sin(phi), std::cos(theta));
        break;
      }
      case CameraModel::Panorama: {
        const double lon = uniform(-3.0, 3.0);
        const double lat = uniform(-1.3, 1.3);
        p = uniform(0.5, 8) *
            Vec3<double>(std::cos(lat) * std::sin(lon), std::sin(lat), std::cos(lat) * std::cos(lon));
        break;
      }
    }
    if (project(p, test_camera(model)).visible) return p;
  }
}

const CameraModel kModels[3] = {CameraModel::Pinhole, CameraModel::FisheyeEquidistant,
                                CameraModel::Panorama};

}  // namespace

TEST_CASE("world_to_camera basics and random oracle") {
  Camera<double> cam = test_camera(CameraModel::Pinhole);
  CHECK((world_to_camera(Vec3<double>(1, 2, 3), cam) - Vec3<double>(1, 2, 3)).norm() == 0.0);

  cam.translation_wc = Vec3<double>(0, 0, -5);
  CHECK(world_to_camera(Vec3<double>(0, 0, 5), cam).norm() == 0.0);

  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::AngleAxisd aa(
        uniform(-3, 3), Vec3<double>(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized());
    cam.rotation_wc = aa.toRotationMatrix();
    cam.translation_wc = Vec3<double>(uniform(-2, 2), uniform(-2, 2), uniform(-2, 2));
    const Vec3<double> x(uniform(-3, 3), uniform(-3, 3), uniform(-3, 3));
    Vec3<double> expected;  // naive row-by-row mat-vec
    for (int r = 0; r < 3; ++r)
      expected[r] = cam.rotation_wc(r, 0) * x[0] + cam.rotation_wc(r, 1) * x[1] +
                    cam.rotation_wc(r, 2) * x[2] + cam.translation_wc[r];
    CHECK((world_to_camera(x, cam) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fisheye projection fixed values") {
  Camera<double> cam = Camera<double>::fisheye(400, 300, 100.0, 100.0, 200.0, 150.0);
  const auto on_axis = project(Vec3<double>(0, 0, 1).eval(), cam);
  CHECK(on_axis.visible);
  CHECK(on_axis.pixel[0] == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(on_axis.pixel[1] == doctest::Approx(150.0).epsilon(1e-12));

  cam.cx = 0.0;
  const auto diag = project(Vec3<double>(1, 0, 1).eval(), cam);
  CHECK(diag.pixel[0] == doctest::Approx(100.0 * pi<double>() / 4).epsilon(1e-12));

  // 90-degree incidence still projects (atan2(1, 0) = pi/2), unlike a pinhole.
  const auto side = project(Vec3<double>(1, 0, 0).eval(), cam);
  CHECK(side.pixel[0] == doctest::Approx(100.0 * pi<double>() / 2).epsilon(1e-12));
}

TEST_CASE("panorama projection fixed values") {
  const Camera<double> cam = Camera<double>::panorama(200, 100);
  const auto fwd = project(Vec3<double>(0, 0, 1).eval(), cam);
  CHECK(fwd.visible);
  CHECK(fwd.pixel[0] == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(fwd.pixel[1] == doctest::Approx(50.0).epsilon(1e-12));

  const auto right = project(Vec3<double>(1, 0, 0).eval(), cam);
  CHECK(right.pixel[0] == doctest::Approx(150.0).epsilon(1e-12));
}

TEST_CASE("pinhole culling and degenerate points") {
  const Camera<double> cam = test_camera(CameraModel::Pinhole);
  CHECK(!project(Vec3<double>(0, 0, -2).eval(), cam).visible);
  CHECK(!project(Vec3<double>(0, 0, 0.1).eval(), cam).visible);  // near clip at 0.2
  CHECK(project(Vec3<double>(0, 0, 0.3).eval(), cam).visible);
  CHECK(!project(Vec3<double>(0, 0, 0).eval(), cam).visible);  // camera origin
  CHECK(!project(Vec3<double>::Zero().eval(), test_camera(CameraModel::Panorama)).visible);
}

TEST_CASE("fisheye culling honors fov_max plus margin") {
  const Camera<double> cam = test_camera(CameraModel::FisheyeEquidistant);  // fov_max = 90 deg
  const auto at = [&](double theta_deg) {
    const double t = deg_to_rad(theta_deg);
    return project(Vec3<double>(std::sin(t), 0, std::cos(t)).eval(), cam).visible;
  };
  CHECK(at(85));
  CHECK(at(99));    // inside the 10-degree margin
  CHECK(!at(101));  // beyond it
  CHECK(!at(120));
}

TEST_CASE("on-axis fisheye Jacobian equals the pinhole Jacobian") {
  const Camera<double> cam = Camera<double>::fisheye(400, 300, 100.0, 100.0, 200.0, 150.0);
  const Mat23<double> j = projection_jacobian(Vec3<double>(0, 0, 1).eval(), cam);
  Mat23<double> expected;
  expected << 100, 0, 0, 0, 100, 0;
  CHECK((j - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("panorama Jacobian at the forward axis") {
  const Camera<double> cam = Camera<double>::panorama(200, 100);
  const Mat23<double> j = projection_jacobian(Vec3<double>(0, 0, 1).eval(), cam);
  CHECK(j(0, 0) == doctest::Approx(200.0 / (2 * pi<double>())).epsilon(1e-12));
  CHECK(j(1, 1) == doctest::Approx(100.0 / pi<double>()).epsilon(1e-12));
  CHECK(std::abs(j(0, 1)) < 1e-15);
  CHECK(std::abs(j(0, 2)) < 1e-15);
  CHECK(std::abs(j(1, 0)) < 1e-15);
  CHECK(std::abs(j(1, 2)) < 1e-15);
}

TEST_CASE("projection_jacobian matches finite differences of project") {
  for (const CameraModel model : kModels) {
    const Camera<double> cam = test_camera(model);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const Vec3<double> p = random_visible_point(model);
      const Mat23<double> j = projection_jacobian(p, cam);
      const Eigen::MatrixXd fd = fd_jacobian(
          [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return project(Vec3<double>(x), cam).pixel;
          },
          Eigen::VectorXd(p), 1e-5);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) worst = std::max(worst, relative_error(j(r, c), fd(r, c)));
    }
    INFO("model ", camera_model_name(model));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("projection_jacobian_grad matches finite differences of the Jacobian") {
  for (const CameraModel model : kModels) {
    const Camera<double> cam = test_camera(model);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const Vec3<double> p = random_visible_point(model);
      const auto grad = projection_jacobian_grad(p, cam);
      for (int k = 0; k < 3; ++k) {
        Vec3<double> pp = p, pm = p;
        pp[k] += 1e-4;
        pm[k] -= 1e-4;
        const Mat23<double> fd =
            (projection_jacobian(pp, cam) - projection_jacobian(pm, cam)) / 2e-4;
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 3; ++c)
            worst = std::max(worst, relative_error(grad[k](r, c), fd(r, c)));
      }
    }
    INFO("model ", camera_model_name(model));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("pinhole Jacobian derivative on the axis") {
  const Camera<double> cam = Camera<double>::pinhole(640, 480, 320.0, 300.0, 320.0, 240.0);
  const double z = 2.5;
  const auto grad = projection_jacobian_grad(Vec3<double>(0, 0, z).eval(), cam);
  Mat23<double> expected;
  expected << -320.0 / (z * z), 0, 0, 0, -300.0 / (z * z), 0;
  CHECK((grad[2] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unproject_direction round trips") {
  for (const CameraModel model : kModels) {
    const Camera<double> cam = test_camera(model);
    const Vec2<double> center(cam.model == CameraModel::Panorama ? cam.width / 2.0 : cam.cx,
                              cam.model == CameraModel::Panorama ? cam.height / 2.0 : cam.cy);
    CHECK((unproject_direction(center, cam) - Vec3<double>(0, 0, 1)).norm() < 1e-12);

    int done = 0;
    while (done < 1000) {
      Vec2<double> px(uniform(1.0, cam.width - 1.0), uniform(1.0, cam.height - 1.0));
      if (model == CameraModel::FisheyeEquidistant) {
        const double r = std::hypot((px[0] - cam.cx) / cam.fx, (px[1] - cam.cy) / cam.fy);
        if (r > 3.0) continue;  // stay inside the theta <= pi disc
      }
      if (model == CameraModel::Panorama && (px[1] < 5 || px[1] > cam.height - 5)) continue;
      const Vec3<double> dir = unproject_direction(px, cam);
      CHECK(dir.norm() == doctest::Approx(1.0).epsilon(1e-12));
      const double t = uniform(0.1, 10.0);
      const auto rt = project((dir * t).eval(), cam);
      CHECK((rt.pixel - px).norm() < 1e-6);
      ++done;
    }
  }
}

TEST_CASE("fisheye pixel beyond 180 degrees is rejected by unproject") {
  const Camera<double> cam = Camera<double>::fisheye(400, 300, 20.0, 20.0, 200.0, 150.0);
  CHECK_THROWS_AS(unproject_direction(Vec2<double>(200.0 + 20.0 * 3.3, 150.0), cam),
                  std::invalid_argument);
}

TEST_CASE("fisheye radial law: pixel distance equals f * theta") {
  const double f = 157.0;
  const Camera<double> cam = Camera<double>::fisheye(640, 480, f, f, 320.0, 240.0, pi<double>());
  for (int trial = 0; trial < 1000; ++trial) {
    const double theta = uniform(1e-3, pi<double>() - 0.05);
    const double phi = uniform(0, 2 * pi<double>());
    const Vec3<double> p = uniform(0.2, 5.0) * Vec3<double>(std::sin(theta) * std::cos(phi),
                                                            std::sin(theta) * std::sin(phi),
                                                            std::cos(theta));
    const auto res = project(p, cam);
    const double rd = (res.pixel - Vec2<double>(320.0, 240.0)).norm();
    CHECK(std::abs(rd - f * theta) / (f * theta) < 1e-9);
  }
}

TEST_CASE("small-angle fisheye matches pinhole within the cubic bound") {
  const double f = 300.0;
  const Camera<double> fish = Camera<double>::fisheye(640, 480, f, f, 320.0, 240.0);
  const Camera<double> pin = Camera<double>::pinhole(640, 480, f, f, 320.0, 240.0);
  double worst = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double theta = uniform(0, deg_to_rad(5.0));
    const double phi = uniform(0, 2 * pi<double>());
    const Vec3<double> p(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                         std::cos(theta));
    const Vec2<double> a = project(p, fish).pixel;
    const Vec2<double> b = project(p, pin).pixel;
    worst = std::max(worst, (a - b).norm());
  }
  // f (tan theta - theta) at 5 degrees is about 0.067 px
  CHECK(worst < 0.07);
}

TEST_CASE("panorama pixel range covers [0,w) x [0,h]") {
  const Camera<double> cam = Camera<double>::panorama(200, 100);
  for (int trial = 0; trial < 5000; ++trial) {
    Vec3<double> p(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    if (p.norm() < 1e-6) continue;
    const auto res = project(p, cam);
    CHECK(res.pixel[0] >= 0.0);
    CHECK(res.pixel[0] < 200.0);
    CHECK(res.pixel[1] >= 0.0);
    CHECK(res.pixel[1] <= 100.0);
  }
  // azimuth exactly pi wraps to column 0
  CHECK(project(Vec3<double>(0, 0, -1).eval(), cam).pixel[0] == 0.0);
}

TEST_CASE("fisheye series and general paths agree near the axis") {
  // Both paths evaluated at l_z = 1e-5, z = 1. Agreement is measured relative
  // to the dominant Jacobian scale: the tiny entries are products with
  // coordinates of order l_z and carry the same absolute accuracy.
  const Camera<double> cam = Camera<double>::fisheye(400, 300, 120.0, 120.0, 200.0, 150.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double phi = uniform(0, 2 * pi<double>());
    const Vec3<double> p(1e-5 * std::cos(phi), 1e-5 * std::sin(phi), 1.0);

    const auto ps = project(p, cam, AxisMode::ForceSeries);
    const auto pg = project(p, cam, AxisMode::ForceGeneral);
    CHECK((ps.pixel - pg.pixel).norm() < 1e-8);

    const Mat23<double> js = projection_jacobian(p, cam, AxisMode::ForceSeries);
    const Mat23<double> jg = projection_jacobian(p, cam, AxisMode::ForceGeneral);
    const double scale = js.cwiseAbs().maxCoeff();
    CHECK((js - jg).cwiseAbs().maxCoeff() / scale < 1e-8);
  }

  // pinhole limit: at shrinking l_z the fisheye pixel and Jacobian converge to
  // the pinhole values
  const Camera<double> pin = Camera<double>::pinhole(400, 300, 120.0, 120.0, 200.0, 150.0);
  for (const double lz : {1e-4, 1e-6, 1e-9, 0.0}) {
    const Vec3<double> p(lz, 0.5 * lz, 1.0);
    const auto fe = project(p, cam);
    const auto ph = project(p, pin);
    CHECK((fe.pixel - ph.pixel).norm() < 1e-7);
    CHECK((projection_jacobian(p, cam) - projection_jacobian(p, pin)).cwiseAbs().maxCoeff() /
              120.0 <
          1e-7);
  }
}

TEST_CASE("visible points always produce finite Jacobians") {
  for (const CameraModel model : kModels) {
    const Camera<double> cam = test_camera(model);
    for (int trial = 0; trial < 500; ++trial) {
      const auto res = project(random_visible_point(model), cam);
      REQUIRE(res.visible);
      CHECK(res.jacobian.allFinite());
    }
  }
}
