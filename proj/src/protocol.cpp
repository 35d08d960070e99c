#include "stress/protocol.hpp"

#include <sodium.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "stress/error.hpp"
#include "stress/format.hpp"

namespace stress {

using nlohmann::json;

std::vector<double> ScoreMatrix::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

void check_classes(const std::vector<std::string>& scorer_classes,
                   const std::vector<std::string>& dataset_classes) {
  if (scorer_classes == dataset_classes) return;
  std::set<std::string> have(scorer_classes.begin(), scorer_classes.end());
  std::set<std::string> want(dataset_classes.begin(), dataset_classes.end());
  std::string missing;
  std::string extra;
  for (const auto& c : want)
    if (!have.contains(c)) missing += (missing.empty() ? "" : ", ") + c;
  for (const auto& c : have)
    if (!want.contains(c)) extra += (extra.empty() ? "" : ", ") + c;
  std::string msg = "scorer classes do not match dataset classes";
  if (!missing.empty()) msg += "; missing from scorer: " + missing;
  if (!extra.empty()) msg += "; not in dataset: " + extra;
  if (missing.empty() && extra.empty()) msg += "; same names in a different order";
  throw ClassMismatch(msg);
}

namespace protocol {

namespace {

std::string shorten(const json& msg) { return excerpt(msg.dump()); }

long long require_job(const json& msg) {
  auto it = msg.find("job");
  if (it == msg.end() || !it->is_number_integer())
    throw ProtocolError("message lacks integer 'job': " + shorten(msg));
  return it->get<long long>();
}

}  // namespace

std::string excerpt(std::string_view raw, std::size_t max) {
  if (raw.size() <= max) return std::string(raw);
  return std::string(raw.substr(0, max)) + "...";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
  const std::size_t len =
      sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop terminator
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw ProtocolError("invalid base64 payload");
  out.resize(len);
  return out;
}

std::vector<std::uint8_t> pack_f32le(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

std::vector<float> unpack_f32le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw ProtocolError("float32 payload length not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

json hello() { return {{"type", "hello"}, {"protocol", kVersion}}; }

json info(const ScorerInfo& i) {
  return {{"type", "info"},
          {"protocol", kVersion},
          {"classes", i.class_names},
          {"input", {{"channels", i.input.channels}, {"height", i.input.height}, {"width", i.input.width}}},
          {"identity", i.identity}};
}

ScorerInfo parse_info(const json& msg) {
  if (!msg.is_object() || msg.value("type", "") != "info")
    throw ProtocolError("expected info message, got: " + shorten(msg));
  if (msg.contains("protocol") && msg["protocol"] != kVersion)
    throw ProtocolError("unsupported protocol version: " + shorten(msg));
  ScorerInfo out;
  try {
    out.class_names = msg.at("classes").get<std::vector<std::string>>();
    const auto& in = msg.at("input");
    out.input = {in.at("channels").get<int>(), in.at("height").get<int>(), in.at("width").get<int>()};
    out.identity = msg.value("identity", std::string());
  } catch (const json::exception&) {
    throw ProtocolError("malformed info message: " + shorten(msg));
  }
  if (out.class_names.empty()) throw ProtocolError("info declares no classes");
  if ((out.input.channels != 1 && out.input.channels != 3) || out.input.height < 1 ||
      out.input.width < 1)
    throw ProtocolError("info declares an invalid input spec: " + shorten(msg));
  return out;
}

json score_request(long long job, std::span<const std::string> ids,
                   std::span<const ImageBuffer> images) {
  if (ids.size() != images.size()) throw InvalidParameter("ids and images differ in length");
  if (images.empty()) throw InvalidParameter("empty score batch");
  const auto& first = images.front();
  std::vector<float> planar;
  planar.reserve(first.size() * images.size());
  for (const auto& img : images) {
    if (!img.same_shape(first)) throw InvalidParameter("score batch images differ in shape");
    append_chw(img, planar);
  }
  return {{"type", "score"},
          {"job", job},
          {"ids", std::vector<std::string>(ids.begin(), ids.end())},
          {"shape", {images.size(), first.channels(), first.height(), first.width()}},
          {"dtype", "f32le"},
          {"data", base64_encode(pack_f32le(planar))}};
}

ScoreRequest parse_score_request(const json& msg) {
  if (!msg.is_object() || msg.value("type", "") != "score")
    throw ProtocolError("expected score message, got: " + shorten(msg));
  ScoreRequest req;
  req.job = require_job(msg);
  std::vector<long long> shape;
  std::string data;
  try {
    req.ids = msg.at("ids").get<std::vector<std::string>>();
    shape = msg.at("shape").get<std::vector<long long>>();
    if (msg.at("dtype").get<std::string>() != "f32le") throw ProtocolError("unsupported dtype");
    data = msg.at("data").get<std::string>();
  } catch (const json::exception&) {
    throw ProtocolError("malformed score message: " + shorten(msg));
  }
  if (shape.size() != 4 || shape[0] != static_cast<long long>(req.ids.size()) || shape[1] < 1 ||
      shape[2] < 1 || shape[3] < 1)
    throw ProtocolError("score shape inconsistent with ids: " + shorten(msg));
  req.shape = {static_cast<int>(shape[1]), static_cast<int>(shape[2]), static_cast<int>(shape[3])};
  const auto floats = unpack_f32le(base64_decode(data));
  const std::size_t per = static_cast<std::size_t>(shape[1] * shape[2] * shape[3]);
  if (floats.size() != per * req.ids.size())
    throw ProtocolError("score payload has " + std::to_string(floats.size()) + " floats, expected " +
                        std::to_string(per * req.ids.size()));
  for (std::size_t i = 0; i < req.ids.size(); ++i)
    req.images.push_back(from_chw(req.shape.channels, req.shape.height, req.shape.width,
                                  std::span<const float>(floats).subspan(i * per, per)));
  return req;
}

json scores(long long job, const std::vector<std::vector<double>>& values) {
  return {{"type", "scores"}, {"job", job}, {"values", values}};
}

json error(long long job, std::string_view message) {
  return {{"type", "error"}, {"job", job}, {"message", message}};
}

std::vector<float> parse_scores(const json& msg, long long job, std::size_t n,
                                std::size_t n_classes) {
  if (!msg.is_object()) throw ProtocolError("expected scores object, got: " + shorten(msg));
  const std::string type = msg.value("type", "");
  if (type == "error")
    throw ProtocolError("scorer reported error for job " + std::to_string(job) + ": " +
                        excerpt(msg.value("message", msg.dump())));
  if (type != "scores") throw ProtocolError("expected scores message, got: " + shorten(msg));
  if (require_job(msg) != job)
    throw ProtocolError("scores reply for job " + std::to_string(require_job(msg)) +
                        ", expected job " + std::to_string(job));
  auto it = msg.find("values");
  if (it == msg.end() || !it->is_array() || it->size() != n)
    throw ProtocolError("scores reply must carry " + std::to_string(n) + " rows: " + shorten(msg));
  std::vector<float> out;
  out.reserve(n * n_classes);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = (*it)[r];
    if (!row.is_array() || row.size() != n_classes)
      throw ProtocolError("scores row " + std::to_string(r) + " must have " +
                          std::to_string(n_classes) + " entries: " + shorten(msg));
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (!row[c].is_number())
        throw ProtocolError("non-numeric score in row " + std::to_string(r) + ": " + shorten(msg));
      const double v = row[c].get<double>();
      if (!(v >= 0.0 && v <= 1.0))
        throw ProtocolError("score out of range [0,1]: " + format_double(v) + " (row " +
                            std::to_string(r) + ", class " + std::to_string(c) + ")");
      out.push_back(static_cast<float>(v));
    }
  }
  return out;
}

json parse_line(std::string_view line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error&) {
    throw ProtocolError("malformed JSON from scorer: " + excerpt(line));
  }
}

}  // namespace protocol
}  // namespace stress
