#include "av360/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace av360::media {

namespace {

void check_frame(const FrameImage& frame) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3)
    throw std::invalid_argument("inconsistent frame dimensions");
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

FrameImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open PPM file: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 PPM file: " + path);

  auto next_int = [&]() {
    int v;
    while (f >> std::ws && f.peek() == '#') f.ignore(1 << 20, '\n');
    if (!(f >> v)) throw std::runtime_error("malformed PPM header: " + path);
    return v;
  };
  FrameImage frame;
  frame.width = next_int();
  frame.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw std::runtime_error("only maxval 255 PPM supported: " + path);
  f.ignore(1);  // single whitespace after header

  frame.rgb.resize(static_cast<std::size_t>(frame.width) * frame.height * 3);
  f.read(reinterpret_cast<char*>(frame.rgb.data()),
         static_cast<std::streamsize>(frame.rgb.size()));
  if (static_cast<std::size_t>(f.gcount()) != frame.rgb.size())
    throw std::runtime_error("truncated PPM data: " + path);
  return frame;
}

void write_ppm(const std::string& path, const FrameImage& frame) {
  check_frame(frame);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write PPM file: " + path);
  f << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(frame.rgb.data()),
          static_cast<std::streamsize>(frame.rgb.size()));
}

FrameImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // normalize anything libpng can hand us to 8-bit RGB
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  FrameImage frame;
  frame.width = static_cast<int>(png_get_image_width(png, info));
  frame.height = static_cast<int>(png_get_image_height(png, info));
  frame.rgb.resize(static_cast<std::size_t>(frame.width) * frame.height * 3);

  std::vector<png_bytep> rows(frame.height);
  for (int y = 0; y < frame.height; ++y)
    rows[y] = frame.rgb.data() + static_cast<std::size_t>(y) * frame.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

void write_png(const std::string& path, const FrameImage& frame) {
  check_frame(frame);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write PNG file: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width),
               static_cast<png_uint_32>(frame.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(frame.height);
  std::vector<std::uint8_t> buf(frame.rgb);
  for (int y = 0; y < frame.height; ++y)
    rows[y] = buf.data() + static_cast<std::size_t>(y) * frame.width * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

FrameImage load_frame(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open frame file: " + path);
  unsigned char sig[8] = {0};
  f.read(reinterpret_cast<char*>(sig), 8);
  f.close();
  if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G')
    return read_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
  throw std::runtime_error("unrecognized frame format (expect PNG or P6 PPM): " + path);
}

}  // namespace av360::media
