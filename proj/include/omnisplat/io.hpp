// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "omnisplat/cameras.hpp"
#include "omnisplat/core.hpp"
#include "omnisplat/model.hpp"

namespace omnisplat {

// Standard 3DGS binary PLY layout: x,y,z, nx,ny,nz, f_dc_0..2, f_rest_0..44,
// opacity, scale_0..2, rot_0..3, all float32. Scales are logs, opacity is a
// logit, rot is the unnormalized (w,x,y,z) quaternion.
struct PlyReadResult {
  Scene<float> scene;
  std::vector<std::string> warnings;
};

PlyReadResult load_ply(const std::string& path);
void save_ply(const Scene<float>& scene, const std::string& path);

template <typename S>
Scene<S> load_ply_as(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  PlyReadResult r = load_ply(path);
  if (warnings) *warnings = std::move(r.warnings);
  return r.scene.template cast<S>();
}

struct CameraReadResult {
  std::vector<Camera<double>> cameras;
  std::vector<std::string> warnings;
};

CameraReadResult load_cameras(const std::string& path);
void save_cameras(const std::vector<Camera<double>>& cameras, const std::string& path);

// 8-bit image output, PNG or PPM chosen by extension. Values are clamped to
// [0,1] and rounded half to even.
void write_image(const ImageBuffer<double>& image, const std::string& path);
void write_image(const ImageBuffer<float>& image, const std::string& path);
void write_gray_image(const std::vector<double>& plane, int width, int height,
                      const std::string& path);

ImageBuffer<double> read_image(const std::string& path);
std::vector<double> read_gray_image(const std::string& path, int* width, int* height);

}  // namespace omnisplat
