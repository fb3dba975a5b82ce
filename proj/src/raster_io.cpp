#include "resdepth/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace resdepth {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

bool host_is_big_endian() { return std::endian::native == std::endian::big; }

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

// Reads one whitespace-delimited token of the header.
std::string next_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size() && std::isspace(b[pos])) ++pos;
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) throw std::runtime_error("pfm: malformed header");
  return tok;
}

std::string geo_path(const std::string& path) { return path + ".geo.json"; }

}  // namespace

std::vector<std::uint8_t> encode_pfm(const FloatRaster& r, bool big_endian) {
  const int w = r.values.width(), h = r.values.height();
  std::ostringstream hdr;
  hdr << "Pf\n" << w << " " << h << "\n" << (big_endian ? "1" : "-1") << "\n";
  const std::string head = hdr.str();
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.resize(head.size() + 4 * r.values.size());
  std::uint8_t* p = out.data() + head.size();
  const bool swap = big_endian != host_is_big_endian();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    float v = (!r.masked.empty() && r.masked[i]) ? kPfmNodata : r.values[i];
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    if (swap) bits = byteswap32(bits);
    std::memcpy(p + 4 * i, &bits, 4);
  }
  return out;
}

FloatRaster decode_pfm(const std::vector<std::uint8_t>& b) {
  std::size_t pos = 0;
  const std::string magic = next_token(b, pos);
  if (magic != "Pf") throw std::runtime_error("pfm: expected single-channel 'Pf' magic, got '" + magic + "'");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(next_token(b, pos));
    h = std::stoi(next_token(b, pos));
    scale = std::stod(next_token(b, pos));
  } catch (const std::logic_error&) {
    throw std::runtime_error("pfm: malformed header");
  }
  if (w <= 0 || h <= 0 || scale == 0.0 || !std::isfinite(scale))
    throw std::runtime_error("pfm: malformed header");
  if (pos >= b.size() || !std::isspace(b[pos])) throw std::runtime_error("pfm: malformed header");
  ++pos;  // single whitespace byte terminates the header
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (b.size() - pos < 4 * n) throw std::runtime_error("pfm: truncated payload");
  const bool big_endian = scale > 0.0;
  const bool swap = big_endian != host_is_big_endian();
  FloatRaster r{Raster<float>(w, h), Mask(w, h, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, b.data() + pos + 4 * i, 4);
    if (swap) bits = byteswap32(bits);
    const float v = std::bit_cast<float>(bits);
    if (v <= kPfmNodata * 0.5f) {
      r.masked[i] = 1;
      r.values[i] = 0.0f;
    } else {
      r.values[i] = v;
    }
  }
  return r;
}

void write_pfm(const std::string& path, const FloatRaster& r, bool big_endian) {
  dump(path, encode_pfm(r, big_endian));
}

FloatRaster read_pfm(const std::string& path) { return decode_pfm(slurp(path)); }

void write_pfm(const std::string& path, const HeightField& h) {
  FloatRaster r{Raster<float>(h.width(), h.height()), h.nodata};
  for (std::size_t i = 0; i < h.values.size(); ++i) r.values[i] = static_cast<float>(h.values[i]);
  write_pfm(path, r);
  nlohmann::json g{{"origin_x", h.grid.origin_x},
                   {"origin_y", h.grid.origin_y},
                   {"cell_size", h.grid.cell_size}};
  std::ofstream f(geo_path(path));
  f << g.dump(2) << "\n";
}

HeightField read_height_pfm(const std::string& path) {
  const FloatRaster r = read_pfm(path);
  GridGeometry grid{r.values.width(), r.values.height(), 0.0, 0.0, 1.0};
  if (std::filesystem::exists(geo_path(path))) {
    std::ifstream f(geo_path(path));
    const auto g = nlohmann::json::parse(f);
    grid.origin_x = g.at("origin_x").get<double>();
    grid.origin_y = g.at("origin_y").get<double>();
    grid.cell_size = g.at("cell_size").get<double>();
  }
  HeightField h(grid);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = r.values[i];
  h.nodata = r.masked;
  h.validate();
  return h;
}

void write_pfm(const std::string& path, const GrayImage& img) {
  FloatRaster r{Raster<float>(img.width(), img.height()), Mask(img.width(), img.height(), 0)};
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    r.values[i] = static_cast<float>(img.values[i]);
    r.masked[i] = img.valid[i] ? 0 : 1;
  }
  write_pfm(path, r);
}

GrayImage read_gray_pfm(const std::string& path) {
  const FloatRaster r = read_pfm(path);
  GrayImage img(r.values.width(), r.values.height());
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    img.values[i] = r.values[i];
    img.valid[i] = r.masked[i] ? 0 : 1;
  }
  img.validate();
  return img;
}

void write_pgm(const std::string& path, const Raster<std::uint8_t>& img) {
  std::ostringstream hdr;
  hdr << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  const std::string head = hdr.str();
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x) out.push_back(img(x, y));
  dump(path, out);
}

Raster<std::uint8_t> read_pgm(const std::string& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P5") throw std::runtime_error("pgm: " + path + " is not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error("pgm: bad header in " + path);
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw std::runtime_error("pgm: unsupported header in " + path);
  ++pos;
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h) throw std::runtime_error("pgm: truncated " + path);
  Raster<std::uint8_t> img(w, h);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) img(x, y) = bytes[pos++];
  return img;
}

Mask read_mask(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".pgm") {
    const auto g = read_pgm(path);
    Mask m(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] != 0;
    return m;
  }
  const auto f = read_pfm(path);
  Mask m(f.values.width(), f.values.height());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = !f.masked[i] && f.values[i] != 0.0f;
  return m;
}

namespace {

void write_png(const std::string& path, int width, int height, int color_type,
               const std::vector<const std::uint8_t*>& rows_top_down) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write failed for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto* row : rows_top_down) png_write_row(png, const_cast<png_bytep>(row));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const Raster<std::uint8_t>& img) {
  std::vector<const std::uint8_t*> rows;
  for (int y = img.height() - 1; y >= 0; --y) rows.push_back(&img(0, y));
  write_png(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw std::invalid_argument("write_png_rgb: buffer size mismatch");
  std::vector<const std::uint8_t*> rows;
  for (int y = height - 1; y >= 0; --y) rows.push_back(rgb.data() + static_cast<std::size_t>(y) * width * 3);
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, rows);
}

Raster<std::uint8_t> to_gray8(const GrayImage& img) {
  Raster<std::uint8_t> out(img.width(), img.height());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = img.valid[i] ? static_cast<std::uint8_t>(std::lround(std::clamp(img.values[i], 0.0, 1.0) * 255.0)) : 0;
  return out;
}

Raster<std::uint8_t> mask_to_gray8(const Mask& m) {
  Raster<std::uint8_t> out(m.width(), m.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] ? 255 : 0;
  return out;
}

void write_height_png(const std::string& path, const HeightField& h) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (!h.nodata[i]) {
      lo = std::min(lo, h.values[i]);
      hi = std::max(hi, h.values[i]);
    }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  write_height_png(path, h, lo, hi);
}

void write_height_png(const std::string& path, const HeightField& h, double lo, double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> rgb(h.values.size() * 3, 0);
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    if (h.nodata[i]) continue;
    const double t = std::clamp((h.values[i] - lo) / span, 0.0, 1.0);
    rgb[3 * i + 0] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    rgb[3 * i + 1] = 0;
    rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
  }
  write_png_rgb(path, h.width(), h.height(), rgb);
}

}  // namespace resdepth
