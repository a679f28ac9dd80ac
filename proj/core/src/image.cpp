#include "retinareg/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "retinareg/error.hpp"

namespace retinareg {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kCF: return "CF";
    case Modality::kFA: return "FA";
    case Modality::kIR: return "IR";
    case Modality::kOCT: return "OCT";
    case Modality::kOCTA: return "OCTA";
    case Modality::kSynthA: return "SYNTH_A";
    case Modality::kSynthB: return "SYNTH_B";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view name) {
  for (Modality m : {Modality::kCF, Modality::kFA, Modality::kIR, Modality::kOCT,
                     Modality::kOCTA, Modality::kSynthA, Modality::kSynthB}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

bool is_inverted_modality(Modality m) {
  return m == Modality::kOCT || m == Modality::kOCTA || m == Modality::kFA;
}

ImageBuffer::ImageBuffer(int width, int height, int channels, float fill)
    : ImageBuffer(width, height, channels,
                  std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                         std::max(height, 0) * std::max(channels, 0),
                                     fill)) {}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "empty image");
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidArgument, "images have 1 or 3 channels");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorCode::kInvalidArgument, "pixel buffer length does not match dimensions");
  }
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kInvalidArgument, "pixel values must lie in [0, 1]");
    }
  }
}

float ImageBuffer::clamped(int x, int y, int c) const {
  return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
}

ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = std::clamp(
          0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2), 0.0f,
          1.0f);
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageBuffer read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::kFormatError, path + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "libpng initialisation failed");
  }
  std::vector<png_byte> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kFormatError, "corrupt PNG " + path);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian 16-bit
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (ch != 1 && ch != 3) throw Error(ErrorCode::kFormatError, "unsupported PNG channel layout");
  std::vector<float> data(static_cast<std::size_t>(w) * h * ch);
  if (out_depth == 16) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const unsigned v = raw[2 * i] | (static_cast<unsigned>(raw[2 * i + 1]) << 8);
      data[i] = static_cast<float>(v) / 65535.0f;
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return ImageBuffer(w, h, ch, std::move(data));
}

void write_png(const ImageBuffer& img, const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "libpng initialisation failed");
  }
  const int w = img.width(), h = img.height(), ch = img.channels();
  std::vector<png_byte> raw(static_cast<std::size_t>(w) * h * ch);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<png_byte>(std::lround(std::clamp(img.data()[i], 0.0f, 1.0f) * 255.0f));
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(w) * ch * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "failed writing " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, w, h, 8, ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace retinareg
