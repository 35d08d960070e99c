#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stress/image.hpp"

namespace stress {

struct InputSpec {
  int channels = 1;
  int height = 1;
  int width = 1;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

// What a scorer declares in its handshake.
struct ScorerInfo {
  std::vector<std::string> class_names;
  InputSpec input;
  std::string identity;
};

// n_samples x n_classes scores in [0,1], rows aligned with ids.
struct ScoreMatrix {
  std::vector<std::string> ids;
  std::size_t n_classes = 0;
  std::vector<float> values;  // row-major

  std::size_t rows() const noexcept { return ids.size(); }
  float at(std::size_t r, std::size_t c) const { return values[r * n_classes + c]; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(values).subspan(r * n_classes, n_classes);
  }
  // Scores of one class across all rows, widened to double.
  std::vector<double> column(std::size_t c) const;

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

// Throws ClassMismatch listing missing/unexpected names or an order difference.
void check_classes(const std::vector<std::string>& scorer_classes,
                   const std::vector<std::string>& dataset_classes);

// Newline-delimited JSON messages exchanged with a scorer process.
//   harness -> scorer: hello, score
//   scorer -> harness: info, scores, error
namespace protocol {

inline constexpr int kVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// float32 little-endian packing, independent of host byte order.
std::vector<std::uint8_t> pack_f32le(std::span<const float> values);
std::vector<float> unpack_f32le(std::span<const std::uint8_t> bytes);

nlohmann::json hello();
nlohmann::json info(const ScorerInfo& info);
ScorerInfo parse_info(const nlohmann::json& msg);

// Images must all have the same shape; they are sent NCHW.
nlohmann::json score_request(long long job, std::span<const std::string> ids,
                             std::span<const ImageBuffer> images);

struct ScoreRequest {
  long long job = 0;
  std::vector<std::string> ids;
  InputSpec shape;
  std::vector<ImageBuffer> images;
};
ScoreRequest parse_score_request(const nlohmann::json& msg);

nlohmann::json scores(long long job, const std::vector<std::vector<double>>& values);
nlohmann::json error(long long job, std::string_view message);

// Validates a scores reply for `job` with n rows of n_classes entries in
// [0,1]. An error reply or malformed payload raises ProtocolError with an
// excerpt of the raw message.
std::vector<float> parse_scores(const nlohmann::json& msg, long long job, std::size_t n,
                                std::size_t n_classes);

// Parse one NDJSON line; ProtocolError on malformed JSON.
nlohmann::json parse_line(std::string_view line);
std::string excerpt(std::string_view raw, std::size_t max = 200);

}  // namespace protocol
}  // namespace stress
