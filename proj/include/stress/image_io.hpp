#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stress/image.hpp"

namespace stress {

// Decode an 8-bit PNG or JPEG (detected by signature). Gray images stay
// single-channel; anything with color becomes RGB; alpha is composited away.
ImageBuffer read_image(const std::filesystem::path& path);
ImageBuffer decode_image(std::span<const std::uint8_t> data);

// 8-bit PNG, quantized with round(p*255). Output bytes depend only on pixels.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
void write_png(const ImageBuffer& img, const std::filesystem::path& path);

// Baseline JPEG encoder, mostly for building test inputs.
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality = 95);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace stress
