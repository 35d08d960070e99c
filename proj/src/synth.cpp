#include "stress/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "stress/error.hpp"
#include "stress/format.hpp"
#include "stress/image_io.hpp"
#include "stress/report.hpp"

namespace stress {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Rng = std::mt19937_64;

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(Rng& rng, std::size_t bound) {
  const std::uint64_t b = bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % b;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % b);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<double> stratified_grid(std::size_t count, Rng& rng) {
  std::vector<double> u(count);
  for (std::size_t j = 0; j < count; ++j) u[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(count);
  shuffle(u, rng);
  return u;
}

std::string trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

AttributeSpec parse_attribute_spec(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw InvalidParameter("attribute spec must look like name=value:share,...: '" + std::string(text) + "'");
  AttributeSpec spec{trim(text.substr(0, eq)), {}};
  std::string_view rest = text.substr(eq + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto colon = item.rfind(':');
    if (colon == std::string_view::npos)
      throw InvalidParameter("missing ':share' in '" + std::string(item) + "'");
    const auto share = parse_double(item.substr(colon + 1));
    if (!share) throw InvalidParameter("bad share in '" + std::string(item) + "'");
    spec.proportions.emplace_back(trim(item.substr(0, colon)), *share);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  if (spec.proportions.empty()) throw InvalidParameter("attribute '" + spec.name + "' has no values");
  return spec;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t n) {
  if (proportions.empty()) throw InvalidParameter("no proportions given");
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidParameter("proportions must be non-negative");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw InvalidParameter("proportions must sum to 1 (got " + format_double(sum) + ")");
  std::vector<std::size_t> counts(proportions.size());
  std::vector<double> remainder(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double exact = proportions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

double synth_auc(double s) {
  if (s >= 0.5) return 1.0;
  const double overlap = (1.0 - 2.0 * s) / (1.0 - s);
  return 1.0 - overlap * overlap / 2.0;
}

void SynthConfig::validate() const {
  if (n < 1) throw InvalidParameter("n must be >= 1");
  if (class_names.empty()) throw InvalidParameter("at least one class is required");
  if (std::set<std::string>(class_names.begin(), class_names.end()).size() != class_names.size())
    throw InvalidParameter("class names must be unique");
  if (!(separability >= 0.0 && separability <= 1.0)) throw InvalidParameter("separability must be in [0,1]");
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw InvalidParameter("prevalence must be in (0,1)");
  if (size < 16) throw InvalidParameter("image size must be >= 16");
  std::set<std::string> names;
  for (const auto& a : attributes) {
    if (a.name.empty() || !names.insert(a.name).second) throw InvalidParameter("attribute names must be unique and non-empty");
    std::vector<double> p;
    for (const auto& [value, share] : a.proportions) p.push_back(share);
    largest_remainder(p, n);
  }
}

json SynthConfig::to_json() const {
  json attrs = json::array();
  for (const auto& a : attributes) {
    json values = json::array();
    for (const auto& [v, p] : a.proportions) values.push_back({{"value", v}, {"share", p}});
    attrs.push_back({{"name", a.name}, {"values", values}});
  }
  return {{"seed", seed},       {"n", n},       {"classes", class_names}, {"attributes", attrs},
          {"separability", separability}, {"prevalence", prevalence}, {"size", size}, {"dataset", dataset_name}};
}

SynthOutput generate_synth(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthOutput out;
  out.config = config;
  const std::size_t n = config.n;
  const std::size_t n_classes = config.class_names.size();

  auto& ds = out.dataset;
  ds.name = config.dataset_name;
  ds.class_names = config.class_names;
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord s;
    std::string num = std::to_string(i);
    s.id = "s" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    s.image_path = "images/" + s.id + ".png";
    s.labels.assign(n_classes, 0);
    ds.samples.push_back(std::move(s));
  }

  out.study.dataset_name = config.dataset_name;
  out.study.schema.class_names = config.class_names;
  for (const auto& a : config.attributes) {
    ds.attributes.push_back({a.name, AttributeType::String});
    std::vector<double> p;
    for (const auto& [value, share] : a.proportions) p.push_back(share);
    const auto counts = largest_remainder(p, n);
    std::vector<std::string> values;
    for (std::size_t k = 0; k < counts.size(); ++k) values.insert(values.end(), counts[k], a.proportions[k].first);
    shuffle(values, rng);
    for (std::size_t i = 0; i < n; ++i) ds.samples[i].attributes[a.name] = values[i];
    for (const auto& [value, share] : a.proportions)
      out.study.subgroups.push_back({value, a.name, EqualsPredicate{value}});
  }
  out.study.schema.attributes = ds.attributes;

  out.latent.assign(n, std::vector<double>(n_classes));
  out.noise.assign(n, std::vector<double>(n_classes));
  const double s = config.separability;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto positives = static_cast<std::size_t>(std::llround(config.prevalence * static_cast<double>(n)));
    std::vector<std::uint8_t> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(positives, n)), 1);
    shuffle(labels, rng);
    const std::size_t p_count = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const auto u_pos = stratified_grid(p_count, rng);
    const auto u_neg = stratified_grid(n - p_count, rng);
    std::size_t jp = 0;
    std::size_t jn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ds.samples[i].labels[c] = labels[i];
      out.latent[i][c] = labels[i] ? s + (1.0 - s) * u_pos[jp++] : (1.0 - s) * u_neg[jn++];
      out.noise[i][c] = labels[i] ? 0.5 * uniform01(rng) : 0.5 + 0.5 * uniform01(rng);
    }
  }

  const int size = config.size;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_classes))));
  const int cell = size / cols;
  const int side = std::max(2, std::min(12, cell / 2));
  for (std::size_t c = 0; c < n_classes; ++c) {
    const int r = static_cast<int>(c) / cols;
    const int k = static_cast<int>(c) % cols;
    out.patches.push_back({r * cell + (cell - side) / 2, k * cell + (cell - side) / 2, side});
  }

  for (std::size_t i = 0; i < n; ++i) {
    ImageBuffer img(1, size, size);
    const double fx = 1.0 + 3.0 * uniform01(rng);
    const double fy = 1.0 + 3.0 * uniform01(rng);
    const double phase = 6.283185307179586 * uniform01(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double wave = std::sin(fx * 6.283185307179586 * x / size + phase) * std::cos(fy * 6.283185307179586 * y / size);
        img.at(y, x) = static_cast<float>(0.35 + 0.12 * wave + 0.06 * (uniform01(rng) - 0.5));
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      const auto [top, left, sd] = out.patches[c];
      const float v = static_cast<float>(0.2 + 0.6 * out.latent[i][c]);
      for (int y = top; y < top + sd; ++y)
        for (int x = left; x < left + sd; ++x) img.at(y, x) = v;
    }
    out.images.push_back(quantize(img));
  }
  return out;
}

json SynthOutput::stub_json() const {
  json samples = json::object();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    samples[dataset.samples[i].id] = {{"image", dataset.samples[i].image_path},
                                      {"latent", latent[i]},
                                      {"noise", noise[i]}};
  }
  json patch_list = json::array();
  for (const auto& p : patches) patch_list.push_back({{"top", p[0]}, {"left", p[1]}, {"side", p[2]}});
  return {{"classes", dataset.class_names},
          {"input", {{"channels", 1}, {"height", config.size}, {"width", config.size}}},
          {"patches", patch_list},
          {"separability", config.separability},
          {"expected_auc", synth_auc(config.separability)},
          {"samples", samples}};
}

void write_synth(const SynthOutput& out, const fs::path& dir) {
  fs::create_directories(dir / "images");
  write_manifest(out.dataset, dir / "manifest.csv");
  write_text(dir / "config.json", to_json(out.study).dump(2) + "\n");
  write_text(dir / "stub.json", out.stub_json().dump(2) + "\n");
  write_text(dir / "synth.json", out.config.to_json().dump(2) + "\n");
  for (std::size_t i = 0; i < out.images.size(); ++i)
    write_png(out.images[i], dir / out.dataset.samples[i].image_path);
}

}  // namespace stress
