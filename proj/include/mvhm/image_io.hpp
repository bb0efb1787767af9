#pragma once

#include "mvhm/render.hpp"

#include <fstream>
#include <string>

namespace mvhm {

// Binary netpbm writers/readers. Color renders go to P6 (8-bit RGB), depth to
// 16-bit P5 at 0.1 mm per unit (big-endian per the format; 0 = background,
// usable range 6553.5 mm), masks to 8-bit P5 (0 or 255). All lossless and
// diffable, so byte-identical regeneration is a meaningful check.

constexpr double kDepthUnitMm = 0.1;

namespace pnm_detail {

inline void write_header(std::ofstream& out, const char* magic, int w, int h,
                         int maxval) {
  out << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
}

inline std::string token(std::istream& in, const std::string& path) {
  std::string t;
  if (!(in >> t)) throw ParseError(path + ": truncated header");
  return t;
}

struct Header {
  int w = 0, h = 0, maxval = 0;
};

inline Header read_header(std::istream& in, const std::string& path,
                          const std::string& magic) {
  if (token(in, path) != magic)
    throw ParseError(path + ": expected " + magic + " header");
  Header hd;
  hd.w = std::stoi(token(in, path));
  hd.h = std::stoi(token(in, path));
  hd.maxval = std::stoi(token(in, path));
  in.get();  // single whitespace before raster
  if (hd.w <= 0 || hd.h <= 0) throw ParseError(path + ": bad image size");
  return hd;
}

}  // namespace pnm_detail

inline void write_ppm(const std::string& path, int w, int h,
                      const std::vector<std::array<std::uint8_t, 3>>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(w) * h)
    throw DomainError("write_ppm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  pnm_detail::write_header(out, "P6", w, h, 255);
  out.write(reinterpret_cast<const char*>(rgb.data()), std::streamsize(rgb.size() * 3));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::array<std::uint8_t, 3>> read_ppm(const std::string& path,
                                                         int& w, int& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  auto hd = pnm_detail::read_header(in, path, "P6");
  if (hd.maxval != 255) throw ParseError(path + ": expected maxval 255");
  std::vector<std::array<std::uint8_t, 3>> rgb(static_cast<std::size_t>(hd.w) * hd.h);
  in.read(reinterpret_cast<char*>(rgb.data()), std::streamsize(rgb.size() * 3));
  if (in.gcount() != std::streamsize(rgb.size() * 3))
    throw ParseError(path + ": truncated raster");
  w = hd.w;
  h = hd.h;
  return rgb;
}

inline void write_depth_pgm(const std::string& path, int w, int h,
                            const std::vector<double>& depth_mm) {
  if (depth_mm.size() != static_cast<std::size_t>(w) * h)
    throw DomainError("write_depth_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  pnm_detail::write_header(out, "P5", w, h, 65535);
  std::vector<unsigned char> raw(depth_mm.size() * 2);
  for (std::size_t i = 0; i < depth_mm.size(); ++i) {
    double units = depth_mm[i] / kDepthUnitMm;
    long v = std::lround(std::clamp(units, 0.0, 65535.0));
    raw[2 * i] = static_cast<unsigned char>(v >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<double> read_depth_pgm(const std::string& path, int& w, int& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  auto hd = pnm_detail::read_header(in, path, "P5");
  if (hd.maxval != 65535) throw ParseError(path + ": expected 16-bit depth");
  std::vector<unsigned char> raw(static_cast<std::size_t>(hd.w) * hd.h * 2);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (in.gcount() != std::streamsize(raw.size()))
    throw ParseError(path + ": truncated raster");
  std::vector<double> depth(static_cast<std::size_t>(hd.w) * hd.h);
  for (std::size_t i = 0; i < depth.size(); ++i)
    depth[i] = ((raw[2 * i] << 8) | raw[2 * i + 1]) * kDepthUnitMm;
  w = hd.w;
  h = hd.h;
  return depth;
}

inline void write_mask_pgm(const std::string& path, int w, int h,
                           const std::vector<std::uint8_t>& mask) {
  if (mask.size() != static_cast<std::size_t>(w) * h)
    throw DomainError("write_mask_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  pnm_detail::write_header(out, "P5", w, h, 255);
  out.write(reinterpret_cast<const char*>(mask.data()), std::streamsize(mask.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_mask_pgm(const std::string& path, int& w,
                                               int& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  auto hd = pnm_detail::read_header(in, path, "P5");
  if (hd.maxval != 255) throw ParseError(path + ": expected 8-bit mask");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(hd.w) * hd.h);
  in.read(reinterpret_cast<char*>(mask.data()), std::streamsize(mask.size()));
  if (in.gcount() != std::streamsize(mask.size()))
    throw ParseError(path + ": truncated raster");
  w = hd.w;
  h = hd.h;
  return mask;
}

}  // namespace mvhm
