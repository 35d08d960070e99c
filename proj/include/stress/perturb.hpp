#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stress/image.hpp"

namespace stress {

enum class PerturbationKind { Gamma, Contrast, Brightness, Sharpness, Blur };

inline constexpr std::array<PerturbationKind, 5> kAllKinds = {
    PerturbationKind::Gamma, PerturbationKind::Contrast, PerturbationKind::Brightness,
    PerturbationKind::Sharpness, PerturbationKind::Blur};

std::string_view kind_name(PerturbationKind kind) noexcept;
std::optional<PerturbationKind> parse_kind(std::string_view name) noexcept;

// Blur only degrades; the other four admit signed levels around identity.
constexpr bool is_bidirectional(PerturbationKind kind) noexcept {
  return kind != PerturbationKind::Blur;
}

// Bidirectional: {-3..-1, 1..3}. Blur: {1..6}.
bool is_admissible(PerturbationKind kind, int level) noexcept;
std::vector<int> default_levels(PerturbationKind kind);

// Geometric schedule: bidirectional parameter = base^level; blur sigma =
// step * level. Positive levels raise the raw parameter.
struct SeverityTable {
  double gamma_base = 1.5;
  double contrast_base = 1.4;
  double brightness_base = 1.3;
  double sharpness_base = 2.0;
  double blur_sigma_step = 0.6;

  double base(PerturbationKind kind) const noexcept;
  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const SeverityTable&, const SeverityTable&) = default;
};

double resolve_severity(PerturbationKind kind, int level, const SeverityTable& table);

// Gaussian kernel radius for a given sigma: ceil(3*sigma).
int blur_radius(double sigma);

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::Gamma;
  int level = 1;
  double parameter = 1.0;

  // e.g. "gamma-3", "blur+2". The clean pass uses kCleanTag.
  std::string tag() const;

  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;
};

inline constexpr std::string_view kCleanTag = "clean";

// Parses a tag produced by PerturbationSpec::tag into (kind, level).
std::optional<std::pair<PerturbationKind, int>> parse_tag(std::string_view tag) noexcept;

struct SuiteConfig {
  SeverityTable table;
  // Requested levels per kind, indexed by PerturbationKind. An empty list
  // drops the kind from the suite.
  std::array<std::vector<int>, 5> levels;

  static SuiteConfig defaults();
  const std::vector<int>& levels_for(PerturbationKind k) const {
    return levels[static_cast<std::size_t>(k)];
  }
  std::vector<int>& levels_for(PerturbationKind k) { return levels[static_cast<std::size_t>(k)]; }

  friend bool operator==(const SuiteConfig&, const SuiteConfig&) = default;
};

// Ordered specs: kinds in enum order, levels ascending, duplicates removed.
// Throws ConfigError (with field path) on invalid tables or levels.
std::vector<PerturbationSpec> build_suite(const SuiteConfig& config);

// Transforms. All return new buffers clamped to [0,1].
ImageBuffer adjust_brightness(const ImageBuffer& img, double factor);
ImageBuffer adjust_contrast(const ImageBuffer& img, double factor);
ImageBuffer adjust_gamma(const ImageBuffer& img, double gamma, double gain = 1.0);
ImageBuffer adjust_sharpness(const ImageBuffer& img, double factor);
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

// Gray: mean pixel. RGB: mean of 0.299 R + 0.587 G + 0.114 B.
double luma_mean(const ImageBuffer& img);

// The 1-D normalized Gaussian weights for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma);

// Reflect an index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n) noexcept;

ImageBuffer apply(const PerturbationSpec& spec, const ImageBuffer& img);

// Tiles apply(spec, img) for each spec into a grid with `columns` tiles per
// row, separated by `gap` pixels of white.
ImageBuffer contact_sheet(const ImageBuffer& img, const std::vector<PerturbationSpec>& specs,
                          int columns, int gap = 2);

}  // namespace stress
