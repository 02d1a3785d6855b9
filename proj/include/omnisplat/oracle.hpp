// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Independent validation machinery. Nothing in this header may reuse the fast
// pipeline's projection, binning, or blending routines: covariances come from
// Eigen quaternions instead of the hand-written rotation, Jacobians are direct
// transcriptions of the projection derivatives instead of the factored radial
// terms, and blending walks every splat per pixel with no tile lists. Only the
// named blending constants are shared, since they define the forward model.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omnisplat/core.hpp"
#include "omnisplat/gradients.hpp"
#include "omnisplat/model.hpp"
#include "omnisplat/parallel.hpp"
#include "omnisplat/splatting.hpp"

namespace omnisplat {

struct FDConfig {
  double step = 1e-5;             // forward-quantity checks (Jacobians)
  double step_end_to_end = 1e-4;  // full-loss gradcheck
};

// Relative error with an absolute floor so near-zero gradients do not blow up
// the quotient.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central-difference Jacobian (f(x+h e_i) - f(x-h e_i)) / 2h.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step = 1e-5) {
  if (!(step > 0)) throw std::invalid_argument("fd_jacobian: step must be positive");
  Eigen::MatrixXd jac;
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const Eigen::VectorXd fp = f(xp);
    const Eigen::VectorXd fm = f(xm);
    if (!fp.allFinite() || !fm.allFinite())
      throw std::runtime_error("fd_jacobian: non-finite value when perturbing coordinate " +
                               std::to_string(i));
    if (jac.size() == 0) jac.resize(fp.size(), x.size());
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

namespace oracle_detail {

struct OracleSplat {
  Eigen::Vector2d mean_px;
  double conic_a, conic_b, conic_c;
  double depth;
  Eigen::Vector3d color;
  double alpha_max;
  int radius_px;
  int source;
};

inline double oracle_sh_color(const Eigen::Matrix<double, 16, 1>& c, const Eigen::Vector3d& d,
                              int degree) {
  // Real SH basis table, transcribed independently of the fast path.
  double v = 0.28209479177387814 * c[0];
  if (degree >= 1) {
    v += -0.4886025119029199 * d.y() * c[1] + 0.4886025119029199 * d.z() * c[2] -
         0.4886025119029199 * d.x() * c[3];
  }
  if (degree >= 2) {
    const double xx = d.x() * d.x(), yy = d.y() * d.y(), zz = d.z() * d.z();
    v += 1.0925484305920792 * d.x() * d.y() * c[4] - 1.0925484305920792 * d.y() * d.z() * c[5] +
         0.31539156525252005 * (2.0 * zz - xx - yy) * c[6] -
         1.0925484305920792 * d.x() * d.z() * c[7] + 0.5462742152960396 * (xx - yy) * c[8];
  }
  if (degree >= 3) {
    const double x = d.x(), y = d.y(), z = d.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    v += -0.5900435899266435 * y * (3.0 * xx - yy) * c[9] + 2.890611442640554 * x * y * z * c[10] -
         0.4570457994644658 * y * (4.0 * zz - xx - yy) * c[11] +
         0.3731763325901154 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * c[12] -
         0.4570457994644658 * x * (4.0 * zz - xx - yy) * c[13] +
         1.445305721320277 * z * (xx - yy) * c[14] - 0.5900435899266435 * x * (xx - yy) * c[15];
  }
  return std::max(v + 0.5, 0.0);
}

// Projection transcribed straight from the per-model formulas (no shared code
// with cameras.hpp). Returns false when the point is culled.
inline bool oracle_project(const Eigen::Vector3d& p, CameraModel model, int width, int height,
                           double fx, double fy, double cx, double cy, double fov_max,
                           Eigen::Vector2d* pixel, Eigen::Matrix<double, 2, 3>* jac) {
  const double x = p.x(), y = p.y(), z = p.z();
  if (p.squaredNorm() < 1e-24) return false;
  switch (model) {
    case CameraModel::Pinhole: {
      if (z <= kPinholeNearClip) return false;
      *pixel << cx + fx * x / z, cy + fy * y / z;
      *jac << fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z);
      return true;
    }
    case CameraModel::FisheyeEquidistant: {
      const double lz = std::sqrt(x * x + y * y);
      if (z < 0.0 && lz * lz < 1e-24 * z * z) return false;  // backward axis
      const double theta = std::atan2(lz, z);
      if (theta > fov_max + kFisheyeCullMarginRad) return false;
      const double l2 = x * x + y * y + z * z;
      if (lz < 1e-8 * std::abs(z)) {
        // axis limit: the equidistant projection degenerates to the pinhole form
        *pixel << cx + fx * x / z, cy + fy * y / z;
        *jac << fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z);
        return true;
      }
      *pixel << cx + fx * theta * x / lz, cy + fy * theta * y / lz;
      const double lz2 = lz * lz, lz3 = lz2 * lz;
      (*jac)(0, 0) = fx * (x * x * z / (lz2 * l2) + y * y * theta / lz3);
      (*jac)(0, 1) = fx * x * y * (z / (lz2 * l2) - theta / lz3);
      (*jac)(0, 2) = -fx * x / l2;
      (*jac)(1, 0) = fy * x * y * (z / (lz2 * l2) - theta / lz3);
      (*jac)(1, 1) = fy * (y * y * z / (lz2 * l2) + x * x * theta / lz3);
      (*jac)(1, 2) = -fy * y / l2;
      return true;
    }
    case CameraModel::Panorama: {
      const double s = x * x + z * z;
      if (s < 1e-24 * y * y) return false;
      const double rho = std::sqrt(s);
      const double l2 = s + y * y;
      const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
      double xp = width * (std::atan2(x, z) + two_pi / 2.0) / two_pi;
      if (xp >= width) xp -= width;
      const double yp =
          height * (std::atan2(y, rho) + two_pi / 4.0) / (two_pi / 2.0);
      *pixel << xp, yp;
      (*jac)(0, 0) = width * z / (two_pi * s);
      (*jac)(0, 1) = 0.0;
      (*jac)(0, 2) = -width * x / (two_pi * s);
      const double hpi = height / (two_pi / 2.0);
      (*jac)(1, 0) = -hpi * x * y / (rho * l2);
      (*jac)(1, 1) = hpi * rho / l2;
      (*jac)(1, 2) = -hpi * y * z / (rho * l2);
      return true;
    }
  }
  return false;
}

template <typename S>
std::vector<OracleSplat> oracle_splats(const Scene<S>& scene, const Camera<S>& camera,
                                       int sh_degree) {
  const Eigen::Matrix3d w = camera.rotation_wc.template cast<double>();
  const Eigen::Vector3d b = camera.translation_wc.template cast<double>();
  const Eigen::Vector3d center = -w.transpose() * b;

  std::vector<OracleSplat> out;
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    const auto g = scene.gaussians[i].template cast<double>();
    const Eigen::Vector3d mu_c = w * g.mean + b;

    Eigen::Vector2d pixel;
    Eigen::Matrix<double, 2, 3> jac;
    if (!oracle_project(mu_c, camera.model, camera.width, camera.height,
                        static_cast<double>(camera.fx), static_cast<double>(camera.fy),
                        static_cast<double>(camera.cx), static_cast<double>(camera.cy),
                        static_cast<double>(camera.fov_max), &pixel, &jac))
      continue;

    const Eigen::Quaterniond quat(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
    const Eigen::Matrix3d r = quat.normalized().toRotationMatrix();
    const Eigen::Vector3d sc = g.log_scale.array().exp().matrix();
    const Eigen::Matrix3d sigma = r * sc.cwiseProduct(sc).asDiagonal() * r.transpose();

    const Eigen::Matrix<double, 2, 3> t = jac * w;
    Eigen::Matrix2d sigma_p = t * sigma * t.transpose();
    sigma_p(0, 0) += blend::kCovarianceDilation;
    sigma_p(1, 1) += blend::kCovarianceDilation;
    const double det = sigma_p.determinant();
    if (!(det > 0.0)) continue;

    const double mid = 0.5 * (sigma_p(0, 0) + sigma_p(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    const int radius = static_cast<int>(std::ceil(blend::kRadiusSigma * std::sqrt(lambda_max)));
    if (pixel.x() + radius < 0 || pixel.x() - radius > camera.width || pixel.y() + radius < 0 ||
        pixel.y() - radius > camera.height)
      continue;

    OracleSplat sp;
    sp.mean_px = pixel;
    sp.conic_a = sigma_p(1, 1) / det;
    sp.conic_b = -sigma_p(0, 1) / det;
    sp.conic_c = sigma_p(0, 0) / det;
    sp.depth = camera.model == CameraModel::Pinhole ? mu_c.z() : mu_c.norm();
    sp.radius_px = radius;
    const Eigen::Vector3d dir = (g.mean - center).normalized();
    for (int ch = 0; ch < 3; ++ch)
      sp.color[ch] = oracle_sh_color(g.sh.col(ch), dir, sh_degree);
    sp.alpha_max = 1.0 / (1.0 + std::exp(-g.opacity_logit));
    sp.source = static_cast<int>(i);
    out.push_back(sp);
  }
  std::sort(out.begin(), out.end(), [](const OracleSplat& a, const OracleSplat& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.source < b.source;
  });
  return out;
}

}  // namespace oracle_detail

template <typename S>
struct OracleOptions {
  int sh_degree = 0;
  size_t max_gaussians = 2000;
};

// Reference renderer: per pixel, walk every splat in global (depth, source)
// order. A splat reaches a pixel exactly when its bounding box overlaps the
// pixel's 16x16 tile, mirroring what tile binning feeds the fast rasterizer.
template <typename S>
ImageBuffer<S> bruteforce_render(const Scene<S>& scene, const Camera<S>& camera,
                                 const OracleOptions<S>& options = {},
                                 std::vector<S>* out_transmittance = nullptr) {
  if (scene.gaussians.size() > options.max_gaussians)
    throw std::invalid_argument("bruteforce_render: scene exceeds the configured Gaussian limit");

  const auto splats = oracle_detail::oracle_splats(scene, camera, options.sh_degree);
  const int width = camera.width, height = camera.height;
  ImageBuffer<S> img(width, height);
  if (out_transmittance) out_transmittance->assign(static_cast<size_t>(width) * height, S(1));

  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      const int tx0 = (px / kTileSize) * kTileSize, ty0 = (py / kTileSize) * kTileSize;
      S trans = S(1);
      Vec3<S> color = Vec3<S>::Zero();
      for (const auto& sp : splats) {
        // tile-overlap gate
        if (sp.mean_px.x() + sp.radius_px < tx0 || sp.mean_px.x() - sp.radius_px >= tx0 + kTileSize ||
            sp.mean_px.y() + sp.radius_px < ty0 || sp.mean_px.y() - sp.radius_px >= ty0 + kTileSize)
          continue;
        const S dx = S(px) + S(0.5) - S(sp.mean_px.x());
        const S dy = S(py) + S(0.5) - S(sp.mean_px.y());
        const S power = S(-0.5) * (S(sp.conic_a) * dx * dx + S(sp.conic_c) * dy * dy) -
                        S(sp.conic_b) * dx * dy;
        if (power > S(0)) continue;
        const S alpha = std::min(S(blend::kAlphaClamp), S(sp.alpha_max) * std::exp(power));
        if (alpha < S(blend::kAlphaSkip)) continue;
        const S next_trans = trans * (S(1) - alpha);
        if (next_trans < S(blend::kTransmittanceStop)) break;
        color += sp.color.template cast<S>() * (alpha * trans);
        trans = next_trans;
      }
      color += trans * scene.background;
      img.set_rgb(px, py, color);
      if (out_transmittance) (*out_transmittance)[static_cast<size_t>(py) * width + px] = trans;
    }
  return img;
}

// Independent (tile, splat) intersection count: full rectangle-overlap scan.
template <typename S>
uint64_t bruteforce_intersections(const std::vector<Splat2D<S>>& splats, int width, int height) {
  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  uint64_t count = 0;
  for (const auto& sp : splats) {
    const double mx = static_cast<double>(sp.mean_px[0]);
    const double my = static_cast<double>(sp.mean_px[1]);
    const double r = sp.radius_px;
    for (int ty = 0; ty < tiles_y; ++ty)
      for (int tx = 0; tx < tiles_x; ++tx) {
        const double x0 = tx * kTileSize, y0 = ty * kTileSize;
        if (mx + r >= x0 && mx - r < x0 + kTileSize && my + r >= y0 && my - r < y0 + kTileSize)
          ++count;
      }
  }
  return count;
}

struct GradcheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  int worst_gaussian = -1;
  int worst_component = -1;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double tolerance = 1e-3;
  bool pass = true;

  // Line-delimited machine-readable form, one record per parameter group.
  std::string to_lines() const {
    std::ostringstream os;
    for (const auto& g : groups) {
      os << "group=" << g.name << " max_rel_err=" << g.max_rel_err
         << " worst_gaussian=" << g.worst_gaussian << " worst_component=" << g.worst_component
         << " pass=" << (g.pass ? 1 : 0) << "\n";
    }
    os << "overall tolerance=" << tolerance << " pass=" << (pass ? 1 : 0) << "\n";
    return os.str();
  }
};

struct GradcheckConfig {
  double step = 1e-4;
  double tolerance = 1e-3;
  Vec3<double> jacobian_grad_scale = Vec3<double>::Ones();  // mutation-test hook
  int threads = 0;
};

namespace oracle_detail {

inline double sum_squares(const ImageBuffer<double>& img) {
  double s = 0.0;
  for (const double v : img.pixels) s += v * v;
  return s;
}

}  // namespace oracle_detail

// End-to-end gradient check of L = sum of squared pixel values: analytic
// gradients from the fast pipeline's backward pass against central finite
// differences of the brute-force renderer's loss.
inline GradcheckReport gradcheck(const Scene<double>& scene, const Camera<double>& camera,
                                 const GradcheckConfig& config = {}) {
  RenderOptions<double> ro;
  ro.sh_degree = 0;
  ro.threads = config.threads;
  const RenderResult<double> rr = render(scene, camera, ro);

  ImageBuffer<double> dl_dimage(camera.width, camera.height);
  for (size_t i = 0; i < dl_dimage.pixels.size(); ++i)
    dl_dimage.pixels[i] = 2.0 * rr.image.pixels[i];

  BackwardOptions<double> bo;
  bo.jacobian_grad_scale = config.jacobian_grad_scale;
  bo.threads = config.threads;
  const GradientBuffer<double> analytic = backward(scene, camera, rr.context, dl_dimage, bo);

  const size_t n = scene.gaussians.size();
  constexpr int kParamsPerGaussian = 14;  // mean 3, rotation 4, log_scale 3, opacity 1, sh_dc 3
  std::vector<double> fd(n * kParamsPerGaussian, 0.0);

  const OracleOptions<double> oo{0, std::max<size_t>(n, 2000)};
  const double h = config.step;
  parallel_for(
      static_cast<int64_t>(n * kParamsPerGaussian),
      [&](int64_t flat) {
        const size_t gi = flat / kParamsPerGaussian;
        const int p = static_cast<int>(flat % kParamsPerGaussian);
        const auto eval = [&](double delta) {
          Scene<double> s = scene;
          Gaussian3D<double>& g = s.gaussians[gi];
          if (p < 3)
            g.mean[p] += delta;
          else if (p < 7)
            g.rotation[p - 3] += delta;
          else if (p < 10)
            g.log_scale[p - 7] += delta;
          else if (p < 11)
            g.opacity_logit += delta;
          else
            g.sh(0, p - 11) += delta;
          return oracle_detail::sum_squares(bruteforce_render(s, camera, oo));
        };
        fd[flat] = (eval(h) - eval(-h)) / (2.0 * h);
      },
      config.threads);

  GradcheckReport report;
  report.tolerance = config.tolerance;
  const auto groups = std::vector<std::pair<std::string, std::pair<int, int>>>{
      {"mean", {0, 3}}, {"rotation", {3, 4}}, {"log_scale", {7, 3}},
      {"opacity", {10, 1}}, {"sh_dc", {11, 3}}};
  for (const auto& [name, span] : groups) {
    GradcheckGroup grp;
    grp.name = name;
    for (size_t gi = 0; gi < n; ++gi)
      for (int c = 0; c < span.second; ++c) {
        const int p = span.first + c;
        double a = 0.0;
        if (p < 3)
          a = analytic.d_mean[gi][p];
        else if (p < 7)
          a = analytic.d_rotation[gi][p - 3];
        else if (p < 10)
          a = analytic.d_log_scale[gi][p - 7];
        else if (p < 11)
          a = analytic.d_opacity_logit[gi];
        else
          a = analytic.d_sh_dc[gi][p - 11];
        const double err = relative_error(a, fd[gi * kParamsPerGaussian + p]);
        if (err > grp.max_rel_err) {
          grp.max_rel_err = err;
          grp.worst_gaussian = static_cast<int>(gi);
          grp.worst_component = c;
        }
      }
    grp.pass = grp.max_rel_err < config.tolerance;
    report.pass = report.pass && grp.pass;
    report.groups.push_back(grp);
  }
  return report;
}

// Scene generator for gradcheck. Finite differences of a renderer with hard
// skip/stop thresholds only converge when no pixel sits within the FD
// excursion of a threshold, so candidates are rendered and rejected until the
// whole blend stays clear of the skip value, the termination value, integer
// radius boundaries, depth ties, and visibility boundaries.
inline std::pair<Scene<double>, Camera<double>> make_gradcheck_scene(CameraModel model,
                                                                     uint64_t seed, int n,
                                                                     bool wide_angle = true) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  Camera<double> camera;
  switch (model) {
    case CameraModel::Pinhole:
      camera = Camera<double>::pinhole(32, 32, 24.0, 24.0, 16.0, 16.0);
      break;
    case CameraModel::FisheyeEquidistant:
      camera = Camera<double>::fisheye(32, 32, 9.5, 9.5, 16.0, 16.0, pi<double>() / 2);
      break;
    case CameraModel::Panorama:
      camera = Camera<double>::panorama(64, 32);
      break;
  }
  // Nontrivial pose so the world-to-camera chain is exercised.
  const Eigen::AngleAxisd aa(0.3, Eigen::Vector3d(0.2, 1.0, 0.5).normalized());
  camera.rotation_wc = aa.toRotationMatrix();
  camera.translation_wc = Vec3<double>(0.1, -0.2, 0.3);

  const double alpha_margin = 1e-5;

  for (int attempt = 0; attempt < 400; ++attempt) {
    Scene<double> scene;
    scene.background = Vec3<double>(0.15, 0.20, 0.25);
    for (int i = 0; i < n; ++i) {
      Gaussian3D<double> g;
      Eigen::Vector3d point_c;
      double sigma_base = 0.3;
      switch (model) {
        case CameraModel::Pinhole: {
          const double z = uniform(3.0, 5.0);
          point_c = Eigen::Vector3d(uniform(-0.45, 0.45) * z, uniform(-0.45, 0.45) * z, z);
          sigma_base = uniform(0.20, 0.42);
          break;
        }
        case CameraModel::FisheyeEquidistant: {
          double theta = uniform(0.10, 1.45);
          if (wide_angle && i == 0) theta = uniform(deg_to_rad(80.0), deg_to_rad(85.0));
          const double phi = uniform(0.0, 2.0 * pi<double>());
          const double dist = uniform(2.5, 4.5);
          point_c = dist * Eigen::Vector3d(std::sin(theta) * std::cos(phi),
                                           std::sin(theta) * std::sin(phi), std::cos(theta));
          sigma_base = uniform(0.50, 0.90);
          break;
        }
        case CameraModel::Panorama: {
          const double lon = uniform(-2.4, 2.4);
          const double lat = uniform(-0.9, 0.9);
          const double dist = uniform(2.5, 4.5);
          point_c = dist * Eigen::Vector3d(std::cos(lat) * std::sin(lon), std::sin(lat),
                                           std::cos(lat) * std::cos(lon));
          sigma_base = uniform(0.45, 0.85);
          break;
        }
      }
      g.mean = camera.rotation_wc.transpose() * (point_c - camera.translation_wc);

      Vec3<double> aniso;
      do {
        aniso = Vec3<double>(uniform(0.75, 1.35), uniform(0.75, 1.35), uniform(0.75, 1.35));
      } while (aniso.maxCoeff() / aniso.minCoeff() < 1.15);
      g.log_scale = (sigma_base * aniso.array()).log().matrix();

      Eigen::Vector4d q(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      while (q.norm() < 0.1) q = Eigen::Vector4d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      g.rotation = (q / q.norm()) * uniform(0.7, 1.3);

      g.opacity_logit = logit(uniform(0.10, 0.28));
      for (int ch = 0; ch < 3; ++ch) g.sh(0, ch) = uniform(-1.0, 1.0);
      scene.gaussians.push_back(g);
    }

    RenderOptions<double> ro;
    ro.sh_degree = 0;
    ro.threads = 1;
    const RenderResult<double> rr = render(scene, camera, ro);
    const ForwardContext<double>& ctx = rr.context;

    bool ok = ctx.splats.size() == static_cast<size_t>(n);

    // Radius safely away from the next integer under FD-sized perturbations.
    for (size_t i = 0; ok && i < ctx.splats.size(); ++i) {
      const auto& sp = ctx.splats[i];
      const double det = sp.conic[0] * sp.conic[2] - sp.conic[1] * sp.conic[1];
      const double a = sp.conic[2] / det, c = sp.conic[0] / det, b = -sp.conic[1] / det;
      const double mid = 0.5 * (a + c);
      const double lmax = mid + std::sqrt(std::max(mid * mid - (a * c - b * b), 0.0));
      const double rexact = blend::kRadiusSigma * std::sqrt(lmax);
      const double frac = rexact - std::floor(rexact);
      if (frac < 0.03 || frac > 0.97) ok = false;
    }

    // Depth separation between splats whose boxes overlap.
    for (size_t i = 0; ok && i < ctx.splats.size(); ++i)
      for (size_t j = i + 1; ok && j < ctx.splats.size(); ++j) {
        const auto& a = ctx.splats[i];
        const auto& b = ctx.splats[j];
        const bool overlap = std::abs(a.mean_px[0] - b.mean_px[0]) <= a.radius_px + b.radius_px &&
                             std::abs(a.mean_px[1] - b.mean_px[1]) <= a.radius_px + b.radius_px;
        if (overlap && std::abs(a.depth - b.depth) < 5e-4) ok = false;
      }

    // Replay the blend and demand margins around every hard threshold.
    for (int t = 0; ok && t < ctx.tiles.num_tiles(); ++t) {
      const uint32_t lo = ctx.tiles.offsets[t], hi = ctx.tiles.offsets[t + 1];
      if (lo == hi) continue;
      const int tx = t % ctx.tiles.tiles_x, ty = t / ctx.tiles.tiles_x;
      const int px0 = tx * kTileSize, px1 = std::min(camera.width, px0 + kTileSize);
      const int py0 = ty * kTileSize, py1 = std::min(camera.height, py0 + kTileSize);
      for (int py = py0; ok && py < py1; ++py)
        for (int px = px0; ok && px < px1; ++px) {
          double trans = 1.0;
          for (uint32_t k = lo; k < hi; ++k) {
            const auto& sp = ctx.splats[ctx.refs[k]];
            const double dx = px + 0.5 - sp.mean_px[0];
            const double dy = py + 0.5 - sp.mean_px[1];
            const double power =
                -0.5 * (sp.conic[0] * dx * dx + sp.conic[2] * dy * dy) - sp.conic[1] * dx * dy;
            if (power > 0.0) continue;
            const double alpha_raw = sp.alpha_max * std::exp(power);
            if (std::abs(alpha_raw - blend::kAlphaSkip) < alpha_margin) { ok = false; break; }
            if (alpha_raw >= 0.9 * blend::kAlphaClamp) { ok = false; break; }
            if (alpha_raw < blend::kAlphaSkip) continue;
            const double next_trans = trans * (1.0 - alpha_raw);
            if (std::abs(next_trans - blend::kTransmittanceStop) < 1e-6) { ok = false; break; }
            if (next_trans < blend::kTransmittanceStop) break;
            trans = next_trans;
          }
          if (trans < 5e-4) ok = false;
        }
    }

    if (ok) return {scene, camera};
  }
  throw std::runtime_error("make_gradcheck_scene: no threshold-safe configuration found");
}

}  // namespace omnisplat
