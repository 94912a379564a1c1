#include "vseg/preprocess/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "vseg/error.hpp"

namespace vseg::io {
namespace {

namespace fs = std::filesystem;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  return f;
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  return in.gcount() == 8 && png_sig_cmp(sig.data(), 0, 8) == 0;
}

// libpng reports errors via longjmp; everything inside these helpers that
// lives across setjmp is trivially destructible.
struct PngReadInfo {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
};

bool png_read_header(std::FILE* f, png_structp png, png_infop info, PngReadInfo& out,
                     bool transform) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_read_info(png, info);
  int bit_depth = 0;
  int color_type = 0;
  png_get_IHDR(png, info, &out.width, &out.height, &bit_depth, &color_type, nullptr, nullptr,
               nullptr);
  if (transform) {
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (bit_depth < 8 && color_type != PNG_COLOR_TYPE_GRAY) png_set_packing(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
  }
  return true;
}

bool png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

RasterImage read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw DataError("libpng initialisation failed");
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  PngReadInfo hdr;
  if (!png_read_header(f.get(), png, info, hdr, true)) {
    throw DataError("corrupt PNG header in '" + path.string() + "'");
  }
  if (hdr.channels != 1 && hdr.channels != 3) {
    throw DataError("unsupported PNG channel layout in '" + path.string() + "'");
  }
  RasterImage img(static_cast<int>(hdr.width), static_cast<int>(hdr.height), hdr.channels);
  std::vector<png_bytep> rows(hdr.height);
  for (png_uint_32 y = 0; y < hdr.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * hdr.width * hdr.channels;
  }
  if (!png_read_rows(png, rows.data())) {
    throw DataError("corrupt PNG data in '" + path.string() + "'");
  }
  return img;
}

// Netpbm header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string comment;
      std::getline(in, comment);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

int pnm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw DataError("malformed netpbm header in '" + path.string() + "'");
}

RasterImage read_pnm(const fs::path& path, bool header_only = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string magic = pnm_token(in);
  const bool ascii = magic == "P2" || magic == "P3";
  const bool binary = magic == "P5" || magic == "P6";
  if (!ascii && !binary) throw DataError("'" + path.string() + "' is not a PNG or PGM/PPM file");
  const int channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  const int width = pnm_int(in, path);
  const int height = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw DataError("unsupported netpbm geometry/maxval in '" + path.string() + "'");
  }
  RasterImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  if (header_only) return img;
  img.pixels.resize(static_cast<std::size_t>(width) * height * channels);
  if (binary) {
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
      throw DataError("truncated netpbm data in '" + path.string() + "'");
    }
  } else {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(pnm_int(in, path));
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
  }
  return img;
}

bool png_write_all(std::FILE* f, png_structp png, png_infop info, png_uint_32 w, png_uint_32 h,
                   int bit_depth, int color_type, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

void write_png_rows(const fs::path& path, int width, int height, int bit_depth, int color_type,
                    const std::uint8_t* data, std::size_t row_bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw DataError("libpng initialisation failed");
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes);
  }
  if (!png_write_all(f.get(), png, info, static_cast<png_uint_32>(width),
                     static_cast<png_uint_32>(height), bit_depth, color_type, rows.data())) {
    throw DataError("failed writing PNG '" + path.string() + "'");
  }
}

}  // namespace

RasterImage read_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing image '" + path.string() + "'");
  return has_png_signature(path) ? read_png(path) : read_pnm(path);
}

ImageSize probe_size(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing image '" + path.string() + "'");
  if (!has_png_signature(path)) {
    const RasterImage hdr = read_pnm(path, true);
    return {hdr.width, hdr.height};
  }
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw DataError("libpng initialisation failed");
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  PngReadInfo hdr;
  if (!png_read_header(f.get(), png, info, hdr, false)) {
    throw DataError("corrupt PNG header in '" + path.string() + "'");
  }
  return {static_cast<int>(hdr.width), static_cast<int>(hdr.height)};
}

void write_png(const fs::path& path, const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("write_png: channels must be 1 or 3");
  }
  write_png_rows(path, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 image.pixels.data(), static_cast<std::size_t>(image.width) * image.channels);
}

void write_png16(const fs::path& path, int width, int height,
                 const std::vector<std::uint16_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height) {
    throw DataError("write_png16: sample count does not match dimensions");
  }
  write_png_rows(path, width, height, 16, PNG_COLOR_TYPE_GRAY,
                 reinterpret_cast<const std::uint8_t*>(samples.data()),
                 static_cast<std::size_t>(width) * 2);
}

void write_pnm(const fs::path& path, const RasterImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

BinaryMask to_mask(const RasterImage& image) {
  BinaryMask mask(image.width, image.height);
  std::uint8_t on = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t v = image.at(x, y, 0);
      if (v == 0) continue;
      if (on == 0) on = v;
      if (v != on) {
        throw DataError("mask is not binary: found sample values " + std::to_string(on) +
                        " and " + std::to_string(v));
      }
      mask.set(x, y, true);
    }
  }
  return mask;
}

BinaryMask threshold_mask(const RasterImage& image, std::uint8_t level) {
  BinaryMask mask(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) mask.set(x, y, image.at(x, y, 0) >= level);
  }
  return mask;
}

RasterImage from_mask(const BinaryMask& mask) {
  RasterImage img(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.at_index(i) ? 255 : 0;
  return img;
}

}  // namespace vseg::io
