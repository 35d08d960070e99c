#include "stress/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stress/error.hpp"
#include "stress/format.hpp"

namespace stress {

namespace {

constexpr std::array<std::string_view, 5> kKindNames = {"gamma", "contrast", "brightness",
                                                        "sharpness", "blur"};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

template <typename Fn>
ImageBuffer map_pixels(const ImageBuffer& img, Fn&& fn) {
  ImageBuffer out = img;
  for (float& p : out.pixels()) p = clamp01(fn(static_cast<double>(p)));
  return out;
}

void require_non_negative(double factor, std::string_view what) {
  if (!(factor >= 0.0) || !std::isfinite(factor))
    throw InvalidParameter(std::string(what) + " must be a finite non-negative number, got " +
                           format_double(factor));
}

}  // namespace

std::string_view kind_name(PerturbationKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<PerturbationKind> parse_kind(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i].size() != name.size()) continue;
    bool same = true;
    for (std::size_t j = 0; j < name.size(); ++j)
      same &= std::tolower(static_cast<unsigned char>(name[j])) == kKindNames[i][j];
    if (same) return static_cast<PerturbationKind>(i);
  }
  return std::nullopt;
}

bool is_admissible(PerturbationKind kind, int level) noexcept {
  if (is_bidirectional(kind)) return level != 0 && level >= -3 && level <= 3;
  return level >= 1 && level <= 6;
}

std::vector<int> default_levels(PerturbationKind kind) {
  if (is_bidirectional(kind)) return {-3, -2, -1, 1, 2, 3};
  return {1, 2, 3, 4, 5, 6};
}

double SeverityTable::base(PerturbationKind kind) const noexcept {
  switch (kind) {
    case PerturbationKind::Gamma: return gamma_base;
    case PerturbationKind::Contrast: return contrast_base;
    case PerturbationKind::Brightness: return brightness_base;
    case PerturbationKind::Sharpness: return sharpness_base;
    case PerturbationKind::Blur: return blur_sigma_step;
  }
  return 0.0;
}

void SeverityTable::validate() const {
  const std::array<std::pair<const char*, double>, 4> bases = {{{"gamma_base", gamma_base},
                                                                {"contrast_base", contrast_base},
                                                                {"brightness_base", brightness_base},
                                                                {"sharpness_base", sharpness_base}}};
  for (const auto& [name, v] : bases)
    if (!(v > 1.0) || !std::isfinite(v))
      throw ConfigError(std::string("suite.severity.") + name,
                        "base must be finite and > 1, got " + format_double(v));
  if (!(blur_sigma_step > 0.0) || !std::isfinite(blur_sigma_step))
    throw ConfigError("suite.severity.blur_sigma_step",
                      "must be finite and > 0, got " + format_double(blur_sigma_step));
}

double resolve_severity(PerturbationKind kind, int level, const SeverityTable& table) {
  if (!is_admissible(kind, level))
    throw InvalidLevel("level " + std::to_string(level) + " is not admissible for " +
                       std::string(kind_name(kind)));
  if (kind == PerturbationKind::Blur) return table.blur_sigma_step * level;
  return std::pow(table.base(kind), level);
}

int blur_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

std::string PerturbationSpec::tag() const {
  return std::string(kind_name(kind)) + (level > 0 ? "+" : "") + std::to_string(level);
}

std::optional<std::pair<PerturbationKind, int>> parse_tag(std::string_view tag) noexcept {
  const auto pos = tag.find_first_of("+-");
  if (pos == std::string_view::npos || pos == 0) return std::nullopt;
  auto kind = parse_kind(tag.substr(0, pos));
  auto level = parse_int(tag.substr(pos));
  if (!kind || !level || !is_admissible(*kind, static_cast<int>(*level))) return std::nullopt;
  return std::make_pair(*kind, static_cast<int>(*level));
}

SuiteConfig SuiteConfig::defaults() {
  SuiteConfig cfg;
  for (auto k : kAllKinds) cfg.levels_for(k) = default_levels(k);
  return cfg;
}

std::vector<PerturbationSpec> build_suite(const SuiteConfig& config) {
  config.table.validate();
  std::vector<PerturbationSpec> specs;
  for (auto kind : kAllKinds) {
    const auto& requested = config.levels_for(kind);
    for (std::size_t i = 0; i < requested.size(); ++i) {
      if (!is_admissible(kind, requested[i]))
        throw ConfigError("suite.levels." + std::string(kind_name(kind)) + "[" +
                              std::to_string(i) + "]",
                          "inadmissible level " + std::to_string(requested[i]));
    }
    std::set<int> levels(requested.begin(), requested.end());
    for (int level : levels)
      specs.push_back({kind, level, resolve_severity(kind, level, config.table)});
  }
  return specs;
}

ImageBuffer adjust_brightness(const ImageBuffer& img, double factor) {
  require_non_negative(factor, "brightness factor");
  return map_pixels(img, [factor](double p) { return factor * p; });
}

double luma_mean(const ImageBuffer& img) {
  double sum = 0.0;
  const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
  if (img.channels() == 1) {
    for (float p : img.pixels()) sum += p;
  } else {
    auto px = img.pixels();
    for (std::size_t i = 0; i < n; ++i)
      sum += 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

ImageBuffer adjust_contrast(const ImageBuffer& img, double factor) {
  require_non_negative(factor, "contrast factor");
  const double mean = luma_mean(img);
  return map_pixels(img, [factor, mean](double p) { return factor * p + (1.0 - factor) * mean; });
}

ImageBuffer adjust_gamma(const ImageBuffer& img, double gamma, double gain) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw InvalidParameter("gamma must be a finite positive number, got " + format_double(gamma));
  if (!std::isfinite(gain)) throw InvalidParameter("gamma gain must be finite");
  return map_pixels(img, [gamma, gain](double p) { return gain * std::pow(p, gamma); });
}

ImageBuffer adjust_sharpness(const ImageBuffer& img, double factor) {
  require_non_negative(factor, "sharpness factor");
  const int h = img.height();
  const int w = img.width();
  if (h < 3 || w < 3) return img;
  const int ch = img.channels();
  ImageBuffer out = img;  // border pixels stay as copied
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      for (int k = 0; k < ch; ++k) {
        double ring = 0.0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            if (dr != 0 || dc != 0) ring += img.at(r + dr, c + dc, k);
        const double center = img.at(r, c, k);
        const double smooth = (ring + 5.0 * center) / 13.0;
        out.at(r, c, k) = clamp01(factor * center + (1.0 - factor) * smooth);
      }
    }
  }
  return out;
}

int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = blur_radius(sigma);
  std::vector<double> weights(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double x = static_cast<double>(i) / sigma;
    weights[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * x * x);
    total += weights[static_cast<std::size_t>(i + radius)];
  }
  for (double& wgt : weights) wgt /= total;
  return weights;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw InvalidParameter("blur sigma must be a finite positive number, got " +
                           format_double(sigma));
  const auto weights = gaussian_kernel(sigma);
  const int radius = static_cast<int>(weights.size() / 2);
  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();

  std::vector<double> horiz(img.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += weights[static_cast<std::size_t>(d + radius)] * img.at(r, reflect_index(c + d, w), k);
        horiz[(static_cast<std::size_t>(r) * w + c) * ch + k] = acc;
      }

  ImageBuffer out(ch, h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int rr = reflect_index(r + d, h);
          acc += weights[static_cast<std::size_t>(d + radius)] *
                 horiz[(static_cast<std::size_t>(rr) * w + c) * ch + k];
        }
        out.at(r, c, k) = clamp01(acc);
      }
  return out;
}

ImageBuffer apply(const PerturbationSpec& spec, const ImageBuffer& img) {
  switch (spec.kind) {
    case PerturbationKind::Gamma: return adjust_gamma(img, spec.parameter);
    case PerturbationKind::Contrast: return adjust_contrast(img, spec.parameter);
    case PerturbationKind::Brightness: return adjust_brightness(img, spec.parameter);
    case PerturbationKind::Sharpness: return adjust_sharpness(img, spec.parameter);
    case PerturbationKind::Blur: return gaussian_blur(img, spec.parameter);
  }
  throw InvalidParameter("unknown perturbation kind");
}

ImageBuffer contact_sheet(const ImageBuffer& img, const std::vector<PerturbationSpec>& specs,
                          int columns, int gap) {
  if (specs.empty()) throw InvalidParameter("contact sheet needs at least one spec");
  if (columns < 1 || gap < 0) throw InvalidParameter("contact sheet geometry is invalid");
  const int n = static_cast<int>(specs.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  const int th = img.height();
  const int tw = img.width();
  ImageBuffer sheet(img.channels(), rows * th + (rows - 1) * gap, cols * tw + (cols - 1) * gap,
                    1.0f);
  for (int i = 0; i < n; ++i) {
    const ImageBuffer tile = apply(specs[static_cast<std::size_t>(i)], img);
    const int oy = (i / cols) * (th + gap);
    const int ox = (i % cols) * (tw + gap);
    for (int r = 0; r < th; ++r)
      for (int c = 0; c < tw; ++c)
        for (int k = 0; k < img.channels(); ++k) sheet.at(oy + r, ox + c, k) = tile.at(r, c, k);
  }
  return sheet;
}

}  // namespace stress
