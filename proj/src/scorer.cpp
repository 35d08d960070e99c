#include "stress/scorer.hpp"

#include <httplib.h>

#include <fstream>
#include <map>
#include <set>

#include "stress/csv.hpp"
#include "stress/error.hpp"
#include "stress/format.hpp"

namespace stress {

using nlohmann::json;

namespace {

void check_batch(const std::optional<ScorerInfo>& info, std::span<const ImageBuffer> images,
                 std::span<const std::string> ids) {
  if (!info) throw ProtocolError("score_batch called before handshake");
  if (images.size() != ids.size()) throw InvalidParameter("images and ids differ in length");
  for (const auto& img : images) {
    if (img.channels() != info->input.channels || img.height() != info->input.height ||
        img.width() != info->input.width)
      throw InvalidParameter("image shape does not match the scorer input spec");
  }
}

ScoreMatrix make_matrix(std::span<const std::string> ids, std::size_t n_classes,
                        std::vector<float> values) {
  ScoreMatrix m;
  m.ids.assign(ids.begin(), ids.end());
  m.n_classes = n_classes;
  m.values = std::move(values);
  return m;
}

}  // namespace

ProcessScorer::ProcessScorer(std::string command, ScorerTimeouts timeouts)
    : command_(std::move(command)), timeouts_(timeouts) {}

json ProcessScorer::read_message(std::chrono::milliseconds timeout) {
  auto line = proc_->read_line(timeout);
  if (!line) throw ProtocolError("scorer process closed its output");
  return protocol::parse_line(*line);
}

ScorerInfo ProcessScorer::handshake() {
  proc_ = std::make_unique<Subprocess>(command_);
  try {
    proc_->write_line(protocol::hello().dump());
    info_ = protocol::parse_info(read_message(timeouts_.handshake));
  } catch (const TimeoutError&) {
    proc_.reset();
    throw TimeoutError("scorer handshake timed out after " +
                       std::to_string(timeouts_.handshake.count()) + " ms");
  } catch (...) {
    proc_.reset();
    throw;
  }
  return *info_;
}

ScoreMatrix ProcessScorer::score_batch(std::span<const ImageBuffer> images,
                                       std::span<const std::string> ids) {
  check_batch(info_, images, ids);
  if (!proc_) throw ProtocolError("scorer connection is closed");
  if (images.empty()) return make_matrix(ids, info_->class_names.size(), {});
  const long long job = next_job_++;
  try {
    proc_->write_line(protocol::score_request(job, ids, images).dump());
    auto values =
        protocol::parse_scores(read_message(timeouts_.job), job, ids.size(), info_->class_names.size());
    return make_matrix(ids, info_->class_names.size(), std::move(values));
  } catch (const Error&) {
    // The stream position is unknown after a failure; force a fresh handshake.
    proc_.reset();
    info_.reset();
    throw;
  }
}

HttpScorer::HttpScorer(std::string url, ScorerTimeouts timeouts) : timeouts_(timeouts) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("scorer", "endpoint URL lacks a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  base_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

json HttpScorer::post(const json& body, std::chrono::milliseconds timeout) {
  httplib::Client client(base_);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout)
      throw TimeoutError("scorer endpoint timed out: " + httplib::to_string(res.error()));
    throw ProtocolError("scorer endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200)
    throw ProtocolError("scorer endpoint returned HTTP " + std::to_string(res->status) + ": " +
                        protocol::excerpt(res->body));
  return protocol::parse_line(res->body);
}

ScorerInfo HttpScorer::handshake() {
  info_ = protocol::parse_info(post(protocol::hello(), timeouts_.handshake));
  return *info_;
}

ScoreMatrix HttpScorer::score_batch(std::span<const ImageBuffer> images,
                                    std::span<const std::string> ids) {
  check_batch(info_, images, ids);
  if (images.empty()) return make_matrix(ids, info_->class_names.size(), {});
  const long long job = next_job_++;
  auto values = protocol::parse_scores(post(protocol::score_request(job, ids, images), timeouts_.job),
                                       job, ids.size(), info_->class_names.size());
  return make_matrix(ids, info_->class_names.size(), std::move(values));
}

ScorerFactory make_scorer_factory(const std::string& endpoint, ScorerTimeouts timeouts) {
  if (endpoint.starts_with("http://") || endpoint.starts_with("https://"))
    return [endpoint, timeouts] { return std::make_unique<HttpScorer>(endpoint, timeouts); };
  return [endpoint, timeouts] { return std::make_unique<ProcessScorer>(endpoint, timeouts); };
}

ScoreMatrix load_precomputed(const std::filesystem::path& path, const Dataset& ds,
                             std::string_view tag, std::vector<std::string>* warnings) {
  std::vector<std::size_t> lines;
  const auto rows = csv::read_file(path.string(), &lines);
  if (rows.empty()) throw ManifestError(1, path.string() + ": empty prediction file");
  const auto& header = rows.front();
  if (header.empty() || header[0] != "id") throw ManifestError(1, "prediction file must start with an id column");
  const bool has_tag = header.size() > 1 && header[1] == "tag";
  const std::size_t first = has_tag ? 2 : 1;
  std::vector<std::string> classes(header.begin() + static_cast<std::ptrdiff_t>(first), header.end());
  check_classes(classes, ds.class_names);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.size(); ++i) index.emplace(ds.samples[i].id, i);

  ScoreMatrix m;
  m.n_classes = ds.n_classes();
  m.values.assign(ds.size() * m.n_classes, 0.0f);
  std::vector<bool> filled(ds.size(), false);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw ManifestError(lines[r], "expected " + std::to_string(header.size()) + " fields");
    if (has_tag && row[1] != tag) continue;
    auto it = index.find(row[0]);
    if (it == index.end()) {
      if (warnings) warnings->push_back("prediction for unknown id '" + row[0] + "' ignored");
      continue;
    }
    if (filled[it->second]) throw ManifestError(lines[r], "duplicate prediction for id '" + row[0] + "'");
    filled[it->second] = true;
    for (std::size_t c = 0; c < m.n_classes; ++c) {
      const auto v = parse_double(row[first + c]);
      if (!v) throw ManifestError(lines[r], "non-numeric score '" + row[first + c] + "'");
      if (!(*v >= 0.0 && *v <= 1.0))
        throw Error(path.string() + ": score " + row[first + c] + " for id '" + row[0] +
                    "' is outside [0,1]");
      m.values[it->second * m.n_classes + c] = static_cast<float>(*v);
    }
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (filled[i]) continue;
    if (n_missing++ < 20) missing += (missing.empty() ? "" : ", ") + ds.samples[i].id;
  }
  if (n_missing)
    throw AlignmentError(path.string() + ": missing predictions for " + std::to_string(n_missing) +
                         " id(s)" + (tag.empty() ? "" : " (tag " + std::string(tag) + ")") + ": " +
                         missing + (n_missing > 20 ? ", ..." : ""));
  for (const auto& s : ds.samples) m.ids.push_back(s.id);
  return m;
}

void write_scores(const ScoreMatrix& scores, const std::vector<std::string>& class_names,
                  const std::filesystem::path& path, std::optional<std::string> tag) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  csv::Row header{"id"};
  if (tag) header.push_back("tag");
  header.insert(header.end(), class_names.begin(), class_names.end());
  csv::write_row(out, header);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    csv::Row row{scores.ids[r]};
    if (tag) row.push_back(*tag);
    for (std::size_t c = 0; c < scores.n_classes; ++c) row.push_back(format_float(scores.at(r, c)));
    csv::write_row(out, row);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace stress
