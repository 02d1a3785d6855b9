// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "omnisplat/io.hpp"

namespace omnisplat {

namespace {

using nlohmann::json;

CameraModel model_from_string(const std::string& s) {
  if (s == "pinhole") return CameraModel::Pinhole;
  if (s == "fisheye_equidistant") return CameraModel::FisheyeEquidistant;
  if (s == "panorama") return CameraModel::Panorama;
  throw std::runtime_error("load_cameras: unknown camera model '" + s + "'");
}

Camera<double> camera_from_json(const json& j, size_t index, std::vector<std::string>* warnings) {
  Camera<double> cam;
  cam.model = model_from_string(j.at("model").get<std::string>());
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  if (cam.width < 16 || cam.height < 16)
    throw std::runtime_error("load_cameras: camera " + std::to_string(index) +
                             ": width and height must be >= 16");

  if (cam.model != CameraModel::Panorama) {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    if (!(cam.fx > 0) || !(cam.fy > 0))
      throw std::runtime_error("load_cameras: camera " + std::to_string(index) +
                               ": focal lengths must be positive");
  }
  cam.fov_max = deg_to_rad(j.value("fov_max_deg", 90.0));

  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || tr.size() != 3)
    throw std::runtime_error("load_cameras: camera " + std::to_string(index) +
                             ": rotation needs 9 numbers (row-major) and translation 3");
  Mat3<double> r;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) r(a, b) = rot[a * 3 + b];
  for (int a = 0; a < 3; ++a) cam.translation_wc[a] = tr[a];

  const double dev = (r.transpose() * r - Mat3<double>::Identity()).cwiseAbs().maxCoeff();
  if (dev > 1e-2)
    throw std::runtime_error("load_cameras: camera " + std::to_string(index) +
                             ": rotation is not orthonormal (deviation " + std::to_string(dev) + ")");
  if (dev > 1e-6 || r.determinant() < 0) {
    Eigen::JacobiSVD<Mat3<double>> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3<double> fixed = svd.matrixU() * svd.matrixV().transpose();
    if (fixed.determinant() < 0)
      throw std::runtime_error("load_cameras: camera " + std::to_string(index) +
                               ": rotation has negative determinant");
    r = fixed;
    if (warnings)
      warnings->push_back("load_cameras: camera " + std::to_string(index) +
                          ": rotation re-orthonormalized (deviation " + std::to_string(dev) + ")");
  }
  cam.rotation_wc = r;
  return cam;
}

json camera_to_json(const Camera<double>& cam) {
  json j;
  j["model"] = camera_model_name(cam.model);
  j["width"] = cam.width;
  j["height"] = cam.height;
  if (cam.model != CameraModel::Panorama) {
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
  }
  if (cam.model == CameraModel::FisheyeEquidistant) j["fov_max_deg"] = rad_to_deg(cam.fov_max);
  std::vector<double> rot(9), tr(3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) rot[a * 3 + b] = cam.rotation_wc(a, b);
  for (int a = 0; a < 3; ++a) tr[a] = cam.translation_wc[a];
  j["rotation"] = rot;
  j["translation"] = tr;
  return j;
}

}  // namespace

CameraReadResult load_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_cameras: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_cameras: " + path + ": " + e.what());
  }

  const json cams = doc.is_array() ? doc : doc.is_object() && doc.contains("cameras")
                                              ? doc.at("cameras")
                                              : json::array({doc});
  CameraReadResult out;
  try {
    for (size_t i = 0; i < cams.size(); ++i)
      out.cameras.push_back(camera_from_json(cams.at(i), i, &out.warnings));
  } catch (const json::exception& e) {
    throw std::runtime_error("load_cameras: " + path + ": " + e.what());
  }
  if (out.cameras.empty()) throw std::runtime_error("load_cameras: " + path + " contains no cameras");
  return out;
}

void save_cameras(const std::vector<Camera<double>>& cameras, const std::string& path) {
  json doc = json::array();
  for (const auto& cam : cameras) doc.push_back(camera_to_json(cam));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_cameras: cannot open " + path + " for writing");
  os << doc.dump(2) << "\n";
}

}  // namespace omnisplat
