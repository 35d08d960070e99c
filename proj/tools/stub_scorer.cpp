// Deterministic test scorer speaking the NDJSON stdio protocol.
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "stress/config.hpp"
#include "stress/error.hpp"
#include "stress/image_io.hpp"
#include "stress/perturb.hpp"
#include "stress/protocol.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stress;

namespace {

struct Sample {
  fs::path image;
  std::vector<double> latent;
  std::vector<double> noise;
};

struct StubState {
  std::string mode = "constant";
  double value = 0.5;
  double w_step = 0.1;
  int fail_level = -1;
  int crash_after = -1;
  int delay_ms = 0;
  bool hang = false;
  bool out_of_range = false;
  ScorerInfo info;
  std::vector<std::array<int, 3>> patches;
  std::map<std::string, Sample> samples;
  std::vector<PerturbationSpec> suite;
  std::unordered_map<std::string, std::unordered_map<std::uint64_t, int>> level_index;
};

std::uint64_t fnv1a(std::span<const float> px) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(px.data());
  for (std::size_t i = 0; i < px.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

ImageBuffer to_input(const ImageBuffer& img, const InputSpec& in) {
  return resize_bilinear(convert_channels(img, in.channels), in.height, in.width);
}

// |level| of the perturbation that turns the sample's clean image into img.
int identify_level(StubState& st, const std::string& id, const ImageBuffer& img) {
  auto it = st.samples.find(id);
  if (it == st.samples.end()) throw Error("unknown id " + id);
  auto& index = st.level_index[id];
  if (index.empty()) {
    const ImageBuffer clean = read_image(it->second.image);
    index.emplace(fnv1a(to_input(clean, st.info.input).pixels()), 0);
    for (const auto& spec : st.suite)
      index.emplace(fnv1a(to_input(apply(spec, clean), st.info.input).pixels()), std::abs(spec.level));
  }
  const auto hit = index.find(fnv1a(img.pixels()));
  if (hit == index.end()) throw Error("image for " + id + " matches no suite perturbation");
  return hit->second;
}

std::vector<double> score_one(StubState& st, const std::string& id, const ImageBuffer& img, int& level) {
  const std::size_t n_classes = st.info.class_names.size();
  std::vector<double> row(n_classes, st.value);
  level = -1;
  if (st.mode == "echo") {
    row.assign(n_classes, mean_pixel(img));
  } else if (st.mode == "probe") {
    for (std::size_t c = 0; c < n_classes && c < st.patches.size(); ++c) {
      const auto [top, left, side] = st.patches[c];
      double sum = 0.0;
      for (int y = top; y < top + side; ++y)
        for (int x = left; x < left + side; ++x) sum += img.at(y, x);
      row[c] = std::clamp(sum / (side * side), 0.0, 1.0);
    }
  } else if (st.mode == "static" || st.mode == "degrade") {
    const auto it = st.samples.find(id);
    if (it == st.samples.end()) throw Error("unknown id " + id);
    const Sample& s = it->second;
    double w = 0.0;
    if (st.mode == "degrade") {
      level = identify_level(st, id, img);
      w = std::min(1.0, st.w_step * level);
    }
    for (std::size_t c = 0; c < n_classes; ++c) row[c] = (1.0 - w) * s.latent[c] + w * s.noise[c];
  }
  if (st.out_of_range) row.assign(n_classes, 1.5);
  return row;
}

void load_stub_file(StubState& st, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const json j = json::parse(in);
  st.info.class_names = j.at("classes").get<std::vector<std::string>>();
  st.info.input = {j.at("input").at("channels").get<int>(), j.at("input").at("height").get<int>(),
                   j.at("input").at("width").get<int>()};
  for (const auto& p : j.value("patches", json::array()))
    st.patches.push_back({p.at("top").get<int>(), p.at("left").get<int>(), p.at("side").get<int>()});
  for (const auto& [id, s] : j.at("samples").items()) {
    st.samples[id] = {path.parent_path() / s.at("image").get<std::string>(),
                      s.at("latent").get<std::vector<double>>(), s.at("noise").get<std::vector<double>>()};
  }
}

int serve(StubState& st) {
  std::string line;
  int jobs = 0;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json msg;
    try {
      msg = protocol::parse_line(line);
    } catch (const Error& e) {
      std::cout << protocol::error(0, e.what()).dump() << std::endl;
      continue;
    }
    const std::string type = msg.value("type", "");
    if (type == "hello") {
      std::cout << protocol::info(st.info).dump() << std::endl;
      continue;
    }
    if (type != "score") {
      std::cout << protocol::error(0, "unsupported message type '" + type + "'").dump() << std::endl;
      continue;
    }
    const long long job = msg.value("job", 0LL);
    if (st.crash_after >= 0 && jobs >= st.crash_after) return 3;
    ++jobs;
    if (st.hang) {
      for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
    }
    if (st.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(st.delay_ms));
    try {
      const auto req = protocol::parse_score_request(msg);
      std::vector<std::vector<double>> values;
      for (std::size_t i = 0; i < req.ids.size(); ++i) {
        int level = -1;
        values.push_back(score_one(st, req.ids[i], req.images[i], level));
        if (st.fail_level >= 0 && level == st.fail_level)
          throw Error("simulated failure at level " + std::to_string(level));
      }
      std::cout << protocol::scores(job, values).dump() << std::endl;
    } catch (const std::exception& e) {
      std::cout << protocol::error(job, e.what()).dump() << std::endl;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test scorer for the stress harness (NDJSON over stdio)"};
  StubState st;
  std::string stub_file;
  std::string classes = "class0,class1";
  std::string config_file;
  int channels = 1;
  int size = 64;
  bool bad_hello = false;
  app.add_option("--mode", st.mode, "constant | echo | probe | static | degrade")
      ->check(CLI::IsMember({"constant", "echo", "probe", "static", "degrade"}));
  app.add_option("--stub", stub_file, "stub.json written by `stress synth`");
  app.add_option("--classes", classes, "comma-separated class names (without --stub)");
  app.add_option("--channels", channels, "declared input channels (without --stub)");
  app.add_option("--size", size, "declared input height and width (without --stub)");
  app.add_option("--value", st.value, "score returned in constant mode");
  app.add_option("--w-step", st.w_step, "degrade mode: noise weight per |level|");
  app.add_option("--config", config_file, "study config whose suite the degrade mode recognizes");
  app.add_option("--fail-level", st.fail_level, "reply with an error for images at this |level|");
  app.add_option("--crash-after", st.crash_after, "exit after this many score jobs");
  app.add_option("--delay-ms", st.delay_ms, "sleep before each reply");
  app.add_flag("--hang", st.hang, "never answer score jobs");
  app.add_flag("--bad-hello", bad_hello, "answer hello with garbage");
  app.add_flag("--out-of-range", st.out_of_range, "return scores outside [0,1]");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!stub_file.empty()) {
      load_stub_file(st, stub_file);
    } else {
      std::stringstream ss(classes);
      for (std::string c; std::getline(ss, c, ',');) st.info.class_names.push_back(c);
      st.info.input = {channels, size, size};
    }
    if ((st.mode == "static" || st.mode == "degrade") && st.samples.empty())
      throw Error("--mode " + st.mode + " needs --stub");
    const SuiteConfig suite = config_file.empty() ? SuiteConfig::defaults() : load_study_config(config_file).suite;
    st.suite = build_suite(suite);
    st.info.identity = "stress_stub/" + st.mode;
    if (st.mode == "degrade") st.info.identity += " w_step=" + std::to_string(st.w_step);
    if (st.mode == "constant") st.info.identity += " value=" + std::to_string(st.value);
  } catch (const std::exception& e) {
    std::cerr << "stress_stub: " << e.what() << '\n';
    return 1;
  }
  if (bad_hello) {
    std::string line;
    if (std::getline(std::cin, line)) std::cout << "this is not json" << std::endl;
    return 0;
  }
  return serve(st);
}
