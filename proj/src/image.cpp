#include "stress/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stress/error.hpp"

namespace stress {

namespace {

void check_shape(int channels, int height, int width) {
  if (channels != 1 && channels != 3)
    throw InvalidParameter("channels must be 1 or 3, got " + std::to_string(channels));
  if (height < 1 || width < 1)
    throw InvalidParameter("image dimensions must be positive, got " + std::to_string(height) +
                           "x" + std::to_string(width));
}

}  // namespace

ImageBuffer::ImageBuffer(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  check_shape(channels, height, width);
  pixels_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

ImageBuffer::ImageBuffer(int channels, int height, int width, std::vector<float> pixels)
    : channels_(channels), height_(height), width_(width), pixels_(std::move(pixels)) {
  check_shape(channels, height, width);
  if (pixels_.size() != static_cast<std::size_t>(channels) * height * width)
    throw InvalidParameter("pixel count does not match shape");
}

void validate(const ImageBuffer& img) {
  check_shape(img.channels(), img.height(), img.width());
  if (img.size() != static_cast<std::size_t>(img.channels()) * img.height() * img.width())
    throw InvalidParameter("pixel count does not match shape");
  for (float p : img.pixels())
    if (!(p >= 0.0f && p <= 1.0f))
      throw InvalidParameter("pixel value outside [0,1]: " + std::to_string(p));
}

ImageBuffer from_bytes(int channels, int height, int width, std::span<const std::uint8_t> bytes) {
  std::vector<float> px(bytes.size());
  std::transform(bytes.begin(), bytes.end(), px.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return ImageBuffer(channels, height, width, std::move(px));
}

std::vector<std::uint8_t> to_bytes(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.size());
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(static_cast<double>(px[i]), 0.0, 1.0) * 255.0;
    out[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

ImageBuffer quantize(const ImageBuffer& img) {
  const auto bytes = to_bytes(img);
  return from_bytes(img.channels(), img.height(), img.width(), bytes);
}

float max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw InvalidParameter("max_abs_diff: shape mismatch");
  float worst = 0.0f;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::fabs(pa[i] - pb[i]));
  return worst;
}

double mean_pixel(const ImageBuffer& img) {
  double sum = 0.0;
  for (float p : img.pixels()) sum += p;
  return img.empty() ? 0.0 : sum / static_cast<double>(img.size());
}

ImageBuffer convert_channels(const ImageBuffer& img, int channels) {
  if (img.channels() == channels) return img;
  ImageBuffer out(channels, img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      if (channels == 3) {
        const float v = img.at(r, c);
        out.at(r, c, 0) = v;
        out.at(r, c, 1) = v;
        out.at(r, c, 2) = v;
      } else {
        const double y = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
        out.at(r, c) = static_cast<float>(std::clamp(y, 0.0, 1.0));
      }
    }
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int height, int width) {
  if (img.height() == height && img.width() == width) return img;
  ImageBuffer out(img.channels(), height, width);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < img.channels(); ++ch) {
        const double top = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
        const double bot = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
        out.at(r, c, ch) = static_cast<float>(std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

void append_chw(const ImageBuffer& img, std::vector<float>& out) {
  out.reserve(out.size() + img.size());
  for (int ch = 0; ch < img.channels(); ++ch)
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) out.push_back(img.at(r, c, ch));
}

ImageBuffer from_chw(int channels, int height, int width, std::span<const float> planar) {
  ImageBuffer out(channels, height, width);
  if (planar.size() != out.size()) throw InvalidParameter("from_chw: size mismatch");
  std::size_t i = 0;
  for (int ch = 0; ch < channels; ++ch)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) out.at(r, c, ch) = planar[i++];
  return out;
}

}  // namespace stress
