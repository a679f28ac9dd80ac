#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace retinareg {

enum class Modality { kCF, kFA, kIR, kOCT, kOCTA, kSynthA, kSynthB };

std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view name);

/// Modalities whose vessels appear bright and are inverted before extraction.
bool is_inverted_modality(Modality m);

/// Row-major, channel-interleaved image with values in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, float fill = 0.0f);
  /// Validates dimensions, length and value range; throws InvalidArgument.
  ImageBuffer(int width, int height, int channels, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  /// Edge-replicated access.
  float clamped(int x, int y, int c = 0) const;

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Luminance (Rec. 601 weights) of a 1- or 3-channel image.
ImageBuffer to_gray(const ImageBuffer& img);

/// Reads 8/16-bit gray, gray+alpha, RGB or RGBA PNGs. Alpha is dropped.
ImageBuffer read_png(const std::string& path);
/// Writes an 8-bit gray or RGB PNG; values are rounded from [0, 1].
void write_png(const ImageBuffer& img, const std::string& path);

}  // namespace retinareg
