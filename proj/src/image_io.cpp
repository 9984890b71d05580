// SPDX-License-Identifier: Apache-2.0
#include <csetjmp>
#include <cstdio>
#include <stdexcept>

#include <jpeglib.h>
#include <png.h>

#include "ugda/image.hpp"

namespace ugda {
namespace {

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  std::longjmp(reinterpret_cast<JpegErrorMgr*>(cinfo->err)->jump, 1);
}

ImageU8 read_jpeg(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open image file: " + path);

  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  ImageU8 out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw std::runtime_error("cannot decode JPEG file: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = ImageU8(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
                cinfo.output_components);
  const std::size_t stride = out.pixels.size() / cinfo.output_height;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return out;
}

ImageU8 read_png_file(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot decode PNG file: " + path);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  ImageU8 out(static_cast<int>(image.width), static_cast<int>(image.height), gray ? 1 : 3);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG file: " + path);
  }
  return out;
}

}  // namespace

ImageU8 read_image(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open image file: " + path);
  unsigned char magic[4] = {0, 0, 0, 0};
  const std::size_t got = std::fread(magic, 1, 4, f);
  std::fclose(f);
  if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
    return read_png_file(path);
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
  throw std::runtime_error("unsupported image format (expected PNG or JPEG): " + path);
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.empty() || (img.channels != 1 && img.channels != 3))
    throw std::runtime_error("write_png: empty or unsupported image for " + path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG file: " + path);
}

}  // namespace ugda
