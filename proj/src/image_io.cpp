#include "pfnet/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "pfnet/error.hpp"
#include "pfnet/kernels.hpp"

namespace pfnet {

namespace {

struct Raw {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<unsigned char> pixels;
};

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Raw decode_png(const std::vector<unsigned char>& bytes, const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError("corrupt PNG " + path + ": " + image.message);
  }
  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raw raw;
  raw.width = static_cast<int>(image.width);
  raw.height = static_cast<int>(image.height);
  raw.channels = color ? 3 : 1;
  raw.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("corrupt PNG " + path + ": " + image.message);
  }
  return raw;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Raw decode_jpeg(const std::vector<unsigned char>& bytes, const std::string& path) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  Raw raw;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("corrupt JPEG " + path + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  raw.width = static_cast<int>(cinfo.output_width);
  raw.height = static_cast<int>(cinfo.output_height);
  raw.channels = cinfo.output_components;
  raw.pixels.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.pixels.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * raw.width * raw.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return raw;
}

Raw decode(const std::string& path) {
  const auto bytes = read_bytes(path);
  static const unsigned char kPng[4] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(kPng, kPng + 4, bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes, path);
  }
  throw IoError("unrecognised image format: " + path);
}

unsigned char quantize(double v) {
  if (std::isnan(v)) v = 0.0;
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::string& path, const std::vector<unsigned char>& pixels,
               int width, int height, bool color) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path + ": " + image.message);
  }
}

}  // namespace

Tensor read_image_rgb(const std::string& path) {
  const Raw raw = decode(path);
  Tensor out(Shape{1, 3, raw.height, raw.width});
  const std::size_t plane = out.shape().plane();
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const int src = raw.channels == 3 ? c : 0;
      out[c * plane + i] = raw.pixels[i * raw.channels + src] / 255.0;
    }
  return out;
}

Tensor read_image_gray(const std::string& path) {
  const Raw raw = decode(path);
  Tensor out(Shape{1, 1, raw.height, raw.width});
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (raw.channels == 1) {
      out[i] = raw.pixels[i] / 255.0;
    } else {
      const unsigned char* p = &raw.pixels[i * 3];
      out[i] = std::round(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }
  return out;
}

void write_png_gray(const std::string& path, const Tensor& map) {
  const Shape s = map.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError("write_png_gray: expected (1, 1, H, W), got " + s.str());
  std::vector<unsigned char> pixels(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) pixels[i] = quantize(map[i]);
  write_png(path, pixels, s.w, s.h, false);
}

void write_png_rgb(const std::string& path, const Tensor& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("write_png_rgb: expected (1, 3, H, W), got " + s.str());
  const std::size_t plane = s.plane();
  std::vector<unsigned char> pixels(image.size());
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) pixels[i * 3 + c] = quantize(image[c * plane + i]);
  write_png(path, pixels, s.w, s.h, true);
}

Tensor binarize_mask(const Tensor& map) {
  Tensor out(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] >= 128.0 / 255.0 ? 1.0 : 0.0;
  return out;
}

Tensor resize_bilinear(const Tensor& x, int height, int width) {
  const Shape s = x.shape();
  if (height <= 0 || width <= 0) throw DimensionError("resize_bilinear: empty target size");
  if (s.h == height && s.w == width) return x;
  Tensor out(Shape{s.n, s.c, height, width});
  kernels::parallel::bilinear_forward(x, out);
  return out;
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace pfnet
