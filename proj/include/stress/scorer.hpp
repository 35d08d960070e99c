#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stress/dataset.hpp"
#include "stress/protocol.hpp"
#include "stress/subprocess.hpp"

namespace stress {

struct ScorerTimeouts {
  std::chrono::milliseconds handshake{30000};
  std::chrono::milliseconds job{300000};
};

// A connection to one scorer. Jobs are strictly serialized per connection.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScorerInfo handshake() = 0;
  // One row per id, in request order.
  virtual ScoreMatrix score_batch(std::span<const ImageBuffer> images,
                                  std::span<const std::string> ids) = 0;
};

using ScorerFactory = std::function<std::unique_ptr<Scorer>()>;

// Scorer subprocess speaking NDJSON over stdin/stdout.
class ProcessScorer final : public Scorer {
 public:
  explicit ProcessScorer(std::string command, ScorerTimeouts timeouts = {});
  ScorerInfo handshake() override;
  ScoreMatrix score_batch(std::span<const ImageBuffer> images,
                          std::span<const std::string> ids) override;

 private:
  nlohmann::json read_message(std::chrono::milliseconds timeout);

  std::string command_;
  ScorerTimeouts timeouts_;
  std::unique_ptr<Subprocess> proc_;
  std::optional<ScorerInfo> info_;
  long long next_job_ = 1;
};

// Same JSON bodies POSTed to an HTTP endpoint; each reply body is the
// scorer's message.
class HttpScorer final : public Scorer {
 public:
  explicit HttpScorer(std::string url, ScorerTimeouts timeouts = {});
  ScorerInfo handshake() override;
  ScoreMatrix score_batch(std::span<const ImageBuffer> images,
                          std::span<const std::string> ids) override;

 private:
  nlohmann::json post(const nlohmann::json& body, std::chrono::milliseconds timeout);

  std::string base_;
  std::string path_;
  ScorerTimeouts timeouts_;
  std::optional<ScorerInfo> info_;
  long long next_job_ = 1;
};

// "http://..." endpoints become HttpScorer, anything else a command line.
ScorerFactory make_scorer_factory(const std::string& endpoint, ScorerTimeouts timeouts = {});

// Prediction CSV: id, optional tag, then one column per class (dataset
// order). When a tag column exists only rows whose tag equals `tag` are used.
// Rows come back in dataset order; unknown ids produce warnings, missing
// ids an AlignmentError, out-of-range scores an Error.
ScoreMatrix load_precomputed(const std::filesystem::path& path, const Dataset& ds,
                             std::string_view tag, std::vector<std::string>* warnings = nullptr);

// Writes the prediction CSV format above (with a tag column when given).
// Scores use 9 significant digits, which reloads every float bit-exactly.
void write_scores(const ScoreMatrix& scores, const std::vector<std::string>& class_names,
                  const std::filesystem::path& path, std::optional<std::string> tag = {});

}  // namespace stress
