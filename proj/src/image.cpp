#include "tikzmcts/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

RasterImage RasterImage::filled(int width, int height, std::uint8_t gray) {
  RasterImage img;
  img.width = width;
  img.height = height;
  img.rgb.assign(static_cast<std::size_t>(width) * height * 3, gray);
  return img;
}

double RasterImage::gray(int x, int y) const {
  const std::uint8_t* p = pixel(x, y);
  return (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RasterImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  const png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(std::string("png decode failed: ") + image.message);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img, int compression_level) {
  if (img.empty()) throw ContractViolation("cannot encode an empty image");

  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encoder allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encode failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      nullptr);
  png_set_compression_level(png, compression_level);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixel(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RasterImage read_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path));
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tikzmcts
