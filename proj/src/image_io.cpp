// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "omnisplat/io.hpp"

namespace omnisplat {

namespace {

uint8_t quantize(double v) {
  v = std::min(1.0, std::max(0.0, v));
  // default FE rounding mode is round-to-nearest-even
  const double r = std::nearbyint(v * 255.0);
  return static_cast<uint8_t>(std::min(255.0, std::max(0.0, r)));
}

std::string extension_of(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  return ext;
}

// ---- minimal PNG writer: 8-bit, stored (uncompressed) deflate blocks ----

uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
  static std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t n = 0; n < 256; ++n) {
      uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& os, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_be32(head, static_cast<uint32_t>(payload.size()));
  os.write(reinterpret_cast<const char*>(head.data()), 4);
  os.write(type, 4);
  if (!payload.empty())
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32_update(0, reinterpret_cast<const uint8_t*>(type), 4);
  if (!payload.empty()) crc = crc32_update(~(~crc), payload.data(), payload.size());
  std::vector<uint8_t> tail;
  put_be32(tail, crc);
  os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  do {
    const size_t n = std::min<size_t>(raw.size() - pos, 65535);
    const bool final = pos + n == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<uint8_t>(n & 0xff));
    z.push_back(static_cast<uint8_t>(n >> 8));
    z.push_back(static_cast<uint8_t>(~n & 0xff));
    z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + n);
    pos += n;
  } while (pos < raw.size());
  uint32_t a = 1, b = 0;
  for (const uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_be32(z, (b << 16) | a);
  return z;
}

void write_png(const std::vector<uint8_t>& rgb, int width, int height, int channels,
               const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_image: cannot open " + path + " for writing");
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(channels == 3 ? 2 : 0);              // color type: RGB or gray
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(os, "IHDR", ihdr);

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * channels + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const size_t row = static_cast<size_t>(y) * width * channels;
    raw.insert(raw.end(), rgb.begin() + row, rgb.begin() + row + static_cast<size_t>(width) * channels);
  }
  write_chunk(os, "IDAT", zlib_store(raw));
  write_chunk(os, "IEND", {});
  if (!os) throw std::runtime_error("write_image: write failed for " + path);
}

void write_ppm(const std::vector<uint8_t>& rgb, int width, int height, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_image: cannot open " + path + " for writing");
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error("write_image: write failed for " + path);
}

void write_pgm(const std::vector<uint8_t>& gray, int width, int height, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_image: cannot open " + path + " for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) throw std::runtime_error("write_image: write failed for " + path);
}

template <typename S>
void write_image_impl(const ImageBuffer<S>& image, const std::string& path) {
  std::vector<uint8_t> bytes(image.pixels.size());
  for (size_t i = 0; i < image.pixels.size(); ++i) bytes[i] = quantize(static_cast<double>(image.pixels[i]));
  const std::string ext = extension_of(path);
  if (ext == "ppm")
    write_ppm(bytes, image.width, image.height, path);
  else if (ext == "png")
    write_png(bytes, image.width, image.height, 3, path);
  else
    throw std::runtime_error("write_image: unknown extension '" + ext + "' (use .png or .ppm)");
}

// ---- readers: PPM/PGM plus the store-block PNGs written above ----

void read_token(std::istream& in, std::string& tok) {
  tok.clear();
  char c;
  while (in.get(c)) {
    if (c == '#') {
      while (in.get(c) && c != '\n') {}
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return;
      continue;
    }
    tok.push_back(c);
  }
}

std::vector<uint8_t> read_pnm(const std::string& path, const std::string& magic, int channels,
                              int* width, int* height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_image: cannot open " + path);
  std::string tok;
  read_token(in, tok);
  if (tok != magic) throw std::runtime_error("read_image: " + path + " is not a " + magic + " file");
  read_token(in, tok);
  *width = std::stoi(tok);
  read_token(in, tok);
  *height = std::stoi(tok);
  read_token(in, tok);
  if (std::stoi(tok) != 255) throw std::runtime_error("read_image: only maxval 255 supported");
  std::vector<uint8_t> data(static_cast<size_t>(*width) * *height * channels);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (static_cast<size_t>(in.gcount()) != data.size())
    throw std::runtime_error("read_image: truncated payload in " + path);
  return data;
}

uint32_t get_be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

std::vector<uint8_t> read_png(const std::string& path, int expect_channels, int* width, int* height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_image: cannot open " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw std::runtime_error("read_image: " + path + " is not a PNG file");

  std::vector<uint8_t> idat;
  int w = 0, h = 0, channels = 0;
  size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const uint32_t len = get_be32(&file[pos]);
    const std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    if (pos + 12 + len > file.size()) throw std::runtime_error("read_image: truncated PNG " + path);
    const uint8_t* payload = &file[pos + 8];
    if (type == "IHDR") {
      w = static_cast<int>(get_be32(payload));
      h = static_cast<int>(get_be32(payload + 4));
      if (payload[8] != 8) throw std::runtime_error("read_image: only 8-bit PNGs supported");
      channels = payload[9] == 2 ? 3 : payload[9] == 0 ? 1 : -1;
      if (channels != expect_channels)
        throw std::runtime_error("read_image: unexpected PNG color type in " + path);
      if (payload[10] != 0 || payload[11] != 0 || payload[12] != 0)
        throw std::runtime_error("read_image: unsupported PNG features in " + path);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || idat.size() < 2) throw std::runtime_error("read_image: malformed PNG " + path);

  // zlib stream with stored deflate blocks only (what write_image produces)
  std::vector<uint8_t> raw;
  size_t zp = 2;
  while (true) {
    if (zp >= idat.size()) throw std::runtime_error("read_image: truncated PNG stream in " + path);
    const uint8_t header = idat[zp];
    if ((header & 0x06) != 0)
      throw std::runtime_error("read_image: compressed PNG not supported by this reader; use .ppm");
    const bool final = header & 1;
    const size_t n = idat[zp + 1] | (size_t(idat[zp + 2]) << 8);
    zp += 5;
    raw.insert(raw.end(), idat.begin() + zp, idat.begin() + zp + n);
    zp += n;
    if (final) break;
  }

  const size_t row_bytes = static_cast<size_t>(w) * expect_channels;
  if (raw.size() != (row_bytes + 1) * h) throw std::runtime_error("read_image: bad PNG payload size");
  std::vector<uint8_t> out(row_bytes * h);
  for (int y = 0; y < h; ++y) {
    if (raw[y * (row_bytes + 1)] != 0)
      throw std::runtime_error("read_image: filtered PNG not supported by this reader");
    std::memcpy(&out[y * row_bytes], &raw[y * (row_bytes + 1) + 1], row_bytes);
  }
  *width = w;
  *height = h;
  return out;
}

}  // namespace

void write_image(const ImageBuffer<double>& image, const std::string& path) {
  write_image_impl(image, path);
}
void write_image(const ImageBuffer<float>& image, const std::string& path) {
  write_image_impl(image, path);
}

void write_gray_image(const std::vector<double>& plane, int width, int height,
                      const std::string& path) {
  std::vector<uint8_t> bytes(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) bytes[i] = quantize(plane[i]);
  const std::string ext = extension_of(path);
  if (ext == "pgm")
    write_pgm(bytes, width, height, path);
  else if (ext == "png")
    write_png(bytes, width, height, 1, path);
  else
    throw std::runtime_error("write_gray_image: unknown extension '" + ext + "' (use .png or .pgm)");
}

ImageBuffer<double> read_image(const std::string& path) {
  const std::string ext = extension_of(path);
  int w = 0, h = 0;
  std::vector<uint8_t> bytes;
  if (ext == "ppm")
    bytes = read_pnm(path, "P6", 3, &w, &h);
  else if (ext == "png")
    bytes = read_png(path, 3, &w, &h);
  else
    throw std::runtime_error("read_image: unknown extension '" + ext + "'");
  ImageBuffer<double> img(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

std::vector<double> read_gray_image(const std::string& path, int* width, int* height) {
  const std::string ext = extension_of(path);
  std::vector<uint8_t> bytes;
  if (ext == "pgm")
    bytes = read_pnm(path, "P5", 1, width, height);
  else if (ext == "png")
    bytes = read_png(path, 1, width, height);
  else
    throw std::runtime_error("read_gray_image: unknown extension '" + ext + "'");
  std::vector<double> plane(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) plane[i] = bytes[i] / 255.0;
  return plane;
}

}  // namespace omnisplat
