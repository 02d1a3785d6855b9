// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "omnisplat/io.hpp"

namespace omnisplat {

namespace {

std::vector<std::string> full_property_list() {
  std::vector<std::string> props = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 45; ++i) props.push_back("f_rest_" + std::to_string(i));
  props.insert(props.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
  return props;
}

std::vector<std::string> dc_only_property_list() {
  std::vector<std::string> props = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                                    "opacity", "scale_0", "scale_1", "scale_2",
                                    "rot_0", "rot_1", "rot_2", "rot_3"};
  return props;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += v[i];
  }
  return s;
}

}  // namespace

PlyReadResult load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ply: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
    throw std::runtime_error("load_ply: " + path + " is not a PLY file");

  size_t vertex_count = 0;
  bool format_seen = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian")
        throw std::runtime_error("load_ply: binary_little_endian required, got format '" + fmt + "'");
      format_seen = true;
    } else if (word == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex")
        throw std::runtime_error("load_ply: unsupported element '" + name + "'");
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float")
        throw std::runtime_error("load_ply: property '" + name + "' has type '" + type +
                                 "', expected float");
      props.push_back(name);
    } else if (word == "comment" || word == "obj_info" || word.empty()) {
      continue;
    } else {
      throw std::runtime_error("load_ply: unexpected header line '" + line + "'");
    }
  }
  if (!format_seen) throw std::runtime_error("load_ply: missing format line (binary_little_endian required)");

  PlyReadResult out;
  bool has_rest = true;
  if (props == full_property_list()) {
    has_rest = true;
  } else if (props == dc_only_property_list()) {
    has_rest = false;
    out.warnings.push_back("load_ply: f_rest_* properties missing; higher-order SH set to zero");
  } else {
    throw std::runtime_error("load_ply: unknown property layout; expected [" +
                             join(full_property_list()) + "] (or the f_rest-free variant), found [" +
                             join(props) + "]");
  }

  const size_t stride = props.size();
  const std::streampos payload_start = in.tellg();
  std::vector<float> row(stride);
  out.scene.gaussians.reserve(vertex_count);
  for (size_t i = 0; i < vertex_count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(stride * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != stride * sizeof(float)) {
      const auto offset = static_cast<long long>(payload_start) +
                          static_cast<long long>(i * stride * sizeof(float)) + in.gcount();
      throw std::runtime_error("load_ply: truncated payload at byte offset " + std::to_string(offset));
    }
    Gaussian3D<float> g;
    size_t k = 0;
    for (int c = 0; c < 3; ++c) g.mean[c] = row[k++];
    k += 3;  // normals ignored
    for (int c = 0; c < 3; ++c) g.sh(0, c) = row[k++];
    if (has_rest)
      for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < 15; ++j) g.sh(j + 1, ch) = row[k++];
    g.opacity_logit = row[k++];
    for (int c = 0; c < 3; ++c) g.log_scale[c] = row[k++];
    for (int c = 0; c < 4; ++c) g.rotation[c] = row[k++];
    out.scene.gaussians.push_back(g);
  }
  return out;
}

void save_ply(const Scene<float>& scene, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_ply: cannot open " + path + " for writing");

  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.gaussians.size() << "\n";
  for (const auto& name : full_property_list()) os << "property float " << name << "\n";
  os << "end_header\n";

  std::vector<float> row(62);
  for (const auto& g : scene.gaussians) {
    size_t k = 0;
    for (int c = 0; c < 3; ++c) row[k++] = g.mean[c];
    for (int c = 0; c < 3; ++c) row[k++] = 0.0f;  // normals
    for (int c = 0; c < 3; ++c) row[k++] = g.sh(0, c);
    for (int ch = 0; ch < 3; ++ch)
      for (int j = 0; j < 15; ++j) row[k++] = g.sh(j + 1, ch);
    row[k++] = g.opacity_logit;
    for (int c = 0; c < 3; ++c) row[k++] = g.log_scale[c];
    for (int c = 0; c < 4; ++c) row[k++] = g.rotation[c];
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("save_ply: write failed for " + path);
}

}  // namespace omnisplat
