#include "wbsf/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace wbsf {

namespace {

constexpr float kFloMagic = 202021.25f;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail("truncated file", path);
}

}  // namespace

FlowField read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open flow file", path);
  float magic = 0.f;
  read_exact(in, &magic, sizeof(magic), path);
  if (magic != kFloMagic) fail("bad .flo magic tag", path);
  std::int32_t w = 0, h = 0;
  read_exact(in, &w, sizeof(w), path);
  read_exact(in, &h, sizeof(h), path);
  if (w <= 0 || h <= 0) fail("non-positive .flo dimensions", path);
  Raster r(w, h, 2);
  read_exact(in, r.data(), r.size() * sizeof(float), path);
  return FlowField(std::move(r));
}

void write_flo(const std::string& path, const FlowField& field) {
  if (field.empty()) throw std::invalid_argument("empty flow field");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write flow file", path);
  const std::int32_t w = field.width(), h = field.height();
  out.write(reinterpret_cast<const char*>(&kFloMagic), sizeof(kFloMagic));
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(field.raster().data()),
            static_cast<std::streamsize>(field.raster().size() * sizeof(float)));
  if (!out) fail("write failed", path);
}

Raster read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open PFM", path);
  std::string tag;
  in >> tag;
  int channels;
  if (tag == "PF")
    channels = 3;
  else if (tag == "Pf")
    channels = 1;
  else
    fail("bad PFM tag", path);
  int w, h;
  double scale;
  in >> w >> h >> scale;
  if (!in || w < 1 || h < 1) fail("bad PFM header", path);
  if (scale >= 0) fail("big-endian PFM not supported", path);
  in.get();  // single whitespace after the scale line
  Raster r(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {  // bottom-to-top storage
    read_exact(in, row.data(), row.size() * sizeof(float), path);
    std::memcpy(r.row(y), row.data(), row.size() * sizeof(float));
  }
  return r;
}

void write_pfm(const std::string& path, const Raster& r) {
  if (r.channels() == 2) throw std::invalid_argument("PFM holds 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write PFM", path);
  out << (r.channels() == 3 ? "PF" : "Pf") << "\n"
      << r.width() << " " << r.height() << "\n"
      << "-1.0\n";
  const std::size_t row_len = static_cast<std::size_t>(r.width()) * r.channels();
  for (int y = r.height() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(r.row(y)),
              static_cast<std::streamsize>(row_len * sizeof(float)));
  if (!out) fail("write failed", path);
}

namespace {

// Skips netpbm whitespace and '#' comments, then parses one integer.
int pnm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) fail("bad PNM header", path);
  return value;
}

Raster read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open PNM", path);
  char p = 0, kind = 0;
  in.get(p).get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) fail("unsupported PNM type", path);
  const int channels = kind == '6' ? 3 : 1;
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval < 1 || maxval > 65535) fail("bad PNM maxval", path);
  Raster r(w, h, channels);
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (maxval < 256) {
    std::vector<std::uint8_t> buf(n);
    read_exact(in, buf.data(), n, path);
    for (std::size_t i = 0; i < n; ++i)
      r.data()[i] = static_cast<float>(buf[i]) / maxval;
  } else {
    std::vector<std::uint8_t> buf(n * 2);  // big-endian 16-bit per netpbm
    read_exact(in, buf.data(), buf.size(), path);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (buf[2 * i] << 8) | buf[2 * i + 1];
      r.data()[i] = static_cast<float>(v) / maxval;
    }
  }
  return r;
}

float clamp01(float v) { return std::clamp(v, 0.f, 1.f); }

Raster read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) fail("cannot open PNG", path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG decode error", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // to little-endian
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG must decode to 1 or 3 channels", path);
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> bytes(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Raster r(w, h, channels);
  const float maxval = depth == 16 ? 65535.f : 255.f;
  for (int y = 0; y < h; ++y) {
    if (depth == 16) {
      const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(rows[y]);
      for (int i = 0; i < w * channels; ++i)
        r.row(y)[i] = static_cast<float>(src[i]) / maxval;
    } else {
      const std::uint8_t* src = rows[y];
      for (int i = 0; i < w * channels; ++i)
        r.row(y)[i] = static_cast<float>(src[i]) / maxval;
    }
  }
  return r;
}

void write_png(const std::string& path, const Raster& r, int depth) {
  if (r.channels() == 2) throw std::invalid_argument("PNG holds 1 or 3 channels");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) fail("cannot write PNG", path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG encode error", path);
  }
  png_init_io(png, fp.get());
  const int color = r.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, r.width(), r.height(), depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);

  const int w = r.width(), ch = r.channels();
  if (depth == 16) {
    std::vector<std::uint16_t> row(static_cast<std::size_t>(w) * ch);
    for (int y = 0; y < r.height(); ++y) {
      for (int i = 0; i < w * ch; ++i)
        row[i] = static_cast<std::uint16_t>(std::lround(clamp01(r.row(y)[i]) * 65535.f));
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  } else {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * ch);
    for (int y = 0; y < r.height(); ++y) {
      for (int i = 0; i < w * ch; ++i)
        row[i] = static_cast<std::uint8_t>(std::lround(clamp01(r.row(y)[i]) * 255.f));
      png_write_row(png, row.data());
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

BitMask read_pgm_mask(const std::string& path) {
  const Raster r = read_pnm(path);
  if (r.channels() != 1) fail("mask PGM must be single-channel", path);
  BitMask m(r.width(), r.height());
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) m.set(x, y, r(x, y) >= 0.5f);
  return m;
}

void write_pgm_mask(const std::string& path, const BitMask& mask) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write PGM", path);
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      out.put(mask(x, y) ? static_cast<char>(255) : 0);
  if (!out) fail("write failed", path);
}

Raster read_image(const std::string& path) {
  if (has_suffix(path, ".png") || has_suffix(path, ".PNG")) return read_png(path);
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) return read_pnm(path);
  if (has_suffix(path, ".pfm")) return read_pfm(path);
  fail("unsupported image extension", path);
}

void write_png8(const std::string& path, const Raster& r) { write_png(path, r, 8); }
void write_png16(const std::string& path, const Raster& r) { write_png(path, r, 16); }

void write_ppm(const std::string& path, const Raster& r, int maxval) {
  if (r.channels() != 3) throw std::invalid_argument("PPM requires 3 channels");
  if (maxval != 255 && maxval != 65535) throw std::invalid_argument("PPM maxval must be 255 or 65535");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write PPM", path);
  out << "P6\n" << r.width() << " " << r.height() << "\n" << maxval << "\n";
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const long v = std::lround(clamp01(r(x, y, c)) * maxval);
        if (maxval == 255) {
          out.put(static_cast<char>(v));
        } else {
          out.put(static_cast<char>(v >> 8)); // big-endian per netpbm
          out.put(static_cast<char>(v & 0xff));
        }
      }
  if (!out) fail("write failed", path);
}

}  // namespace wbsf
