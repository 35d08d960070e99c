#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "stress/dataset.hpp"
#include "stress/image.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline const fs::path kCli = STRESS_CLI_PATH;
inline const fs::path kStub = STRESS_STUB_PATH;
inline const fs::path kFixtures = STRESS_FIXTURE_DIR;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "stress") {
    std::string tmpl = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Every file below dir, relative path -> bytes.
inline std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).string(), read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

// Brute-force oracles, deliberately naive.

inline std::optional<double> pairwise_auc(std::span<const double> s, std::span<const std::uint8_t> y) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

struct NaiveCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline NaiveCounts naive_counts(std::span<const double> s, std::span<const std::uint8_t> y, double t) {
  NaiveCounts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = !(s[i] < t);
    if (y[i] && p) ++c.tp;
    if (y[i] && !p) ++c.fn;
    if (!y[i] && p) ++c.fp;
    if (!y[i] && !p) ++c.tn;
  }
  return c;
}

// Exhaustive sweep over every midpoint; the largest threshold among the
// F1 maximizers. 0.5 when there are no positives or no midpoints.
inline double sweep_threshold(std::vector<double> s, std::span<const std::uint8_t> y) {
  const std::vector<double> orig = s;
  if (std::count(y.begin(), y.end(), 1) == 0) return 0.5;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::optional<double> best;
  double best_t = 0.5;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const double t = (s[k] + s[k + 1]) / 2.0;
    const auto c = naive_counts(orig, y, t);
    const double f1 = static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (!best || f1 >= *best) {
      best = f1;
      best_t = t;
    }
  }
  return best_t;
}

inline double naive_ece(std::span<const double> s, std::span<const std::uint8_t> y, std::size_t bins) {
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double conf = 0.0;
    double pos = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool in = b + 1 == bins ? (s[i] >= lo && s[i] <= hi) : (s[i] >= lo && s[i] < hi);
      if (!in) continue;
      conf += s[i];
      pos += y[i];
      ++n;
    }
    if (n) total += static_cast<double>(n) / static_cast<double>(s.size()) * std::abs(pos / n - conf / n);
  }
  return total;
}

// Random scores on a coarse grid so ties are common.
inline std::vector<double> tied_scores(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> grid(0, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coarse(0.5);
  std::vector<double> s(n);
  for (auto& v : s) v = coarse(rng) ? grid(rng) / 10.0 : u(rng);
  return s;
}

inline std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = b(rng) ? 1 : 0;
  return y;
}

inline stress::ImageBuffer random_image(std::mt19937_64& rng, int c, int h, int w) {
  stress::ImageBuffer img(c, h, w);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : img.pixels()) v = static_cast<float>(px(rng)) / 255.0f;
  return img;
}

}  // namespace testing_support
