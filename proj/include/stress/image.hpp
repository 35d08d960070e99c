#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stress {

// Decoded image as normalized float pixels, interleaved (row, column, channel).
// Every pixel lies in [0,1]; channels is 1 (gray) or 3 (RGB).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int channels, int height, int width, float fill = 0.0f);
  ImageBuffer(int channels, int height, int width, std::vector<float> pixels);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float at(int row, int col, int ch = 0) const noexcept {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  float& at(int row, int col, int ch = 0) noexcept {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }

  std::span<const float> pixels() const noexcept { return pixels_; }
  std::span<float> pixels() noexcept { return pixels_; }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

// Throws InvalidParameter if shape or pixel range invariants do not hold.
void validate(const ImageBuffer& img);

// 8-bit <-> float conversions: decode divides by 255, encode rounds p*255.
ImageBuffer from_bytes(int channels, int height, int width, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> to_bytes(const ImageBuffer& img);

// Round-trip through 8-bit quantization.
ImageBuffer quantize(const ImageBuffer& img);

// Largest |a-b| over all pixels; shapes must match.
float max_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

double mean_pixel(const ImageBuffer& img);

// Gray <-> RGB conversion (replicate / luma).
ImageBuffer convert_channels(const ImageBuffer& img, int channels);

// Bilinear resize with half-pixel centers.
ImageBuffer resize_bilinear(const ImageBuffer& img, int height, int width);

// Pack into planar CHW order (the scorer wire layout).
void append_chw(const ImageBuffer& img, std::vector<float>& out);
ImageBuffer from_chw(int channels, int height, int width, std::span<const float> planar);

}  // namespace stress
