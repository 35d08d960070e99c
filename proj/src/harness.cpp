#include "stress/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "stress/error.hpp"
#include "stress/format.hpp"
#include "stress/image_io.hpp"

namespace stress {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string pass_tag(const std::optional<PerturbationSpec>& spec) {
  return spec ? spec->tag() : std::string(kCleanTag);
}

fs::path score_cache(const StressJob& job, const std::string& tag) {
  return job.out_dir / "scores" / (tag + ".csv");
}

ImageBuffer prepare(const ImageBuffer& img, const std::optional<PerturbationSpec>& spec,
                    const InputSpec& input) {
  ImageBuffer out = spec ? apply(*spec, img) : img;
  out = convert_channels(out, input.channels);
  return resize_bilinear(out, input.height, input.width);
}

auto row_key(const MetricResult& r) {
  return std::tie(r.dataset, r.class_name, r.subgroup, r.kind, r.level, r.metric);
}

}  // namespace

void StressJob::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
  if (n_bins < 1) throw ConfigError("bins", "must be >= 1");
  if (retries < 0) throw ConfigError("retries", "must be >= 0");
  if (out_dir.empty()) throw ConfigError("out", "output directory is required");
  if (frozen_thresholds && frozen_thresholds->values.size() != dataset.n_classes())
    throw ConfigError("thresholds", "frozen thresholds do not match the class count");
}

ImagePassScorer::ImagePassScorer(ScorerFactory factory, const Dataset& ds, std::size_t batch_size,
                                 std::size_t workers, std::optional<fs::path> keep_images_dir)
    : factory_(std::move(factory)),
      ds_(ds),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      workers_(std::max<std::size_t>(1, workers)),
      keep_dir_(std::move(keep_images_dir)) {}

ImagePassScorer::~ImagePassScorer() = default;

void ImagePassScorer::connect() {
  healthy_ = false;
  connections_.clear();
  for (std::size_t w = 0; w < workers_; ++w) {
    auto scorer = factory_();
    auto info = scorer->handshake();
    check_classes(info.class_names, ds_.class_names);
    if (!info_) info_ = info;
    connections_.push_back(std::move(scorer));
  }
  healthy_ = true;
}

ScorerInfo ImagePassScorer::handshake() {
  connect();
  return *info_;
}

ScoreMatrix ImagePassScorer::score_pass(const std::optional<PerturbationSpec>& spec) {
  if (!healthy_) connect();
  const std::size_t n = ds_.size();
  const std::size_t n_classes = ds_.n_classes();
  const std::size_t n_batches = (n + batch_size_ - 1) / batch_size_;
  const std::string tag = pass_tag(spec);

  ScoreMatrix out;
  out.n_classes = n_classes;
  out.values.assign(n * n_classes, 0.0f);
  for (const auto& s : ds_.samples) out.ids.push_back(s.id);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;

  auto work = [&](Scorer& scorer) {
    std::vector<ImageBuffer> images;
    std::vector<std::string> ids;
    while (!failed.load()) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_batches) break;
      const std::size_t lo = b * batch_size_;
      const std::size_t hi = std::min(n, lo + batch_size_);
      try {
        images.clear();
        ids.clear();
        for (std::size_t i = lo; i < hi; ++i) {
          images.push_back(prepare(read_image(ds_.image_file(i)), spec, info_->input));
          ids.push_back(ds_.samples[i].id);
          if (keep_dir_) write_png(images.back(), *keep_dir_ / tag / (ids.back() + ".png"));
        }
        const auto m = scorer.score_batch(images, ids);
        if (m.rows() != ids.size() || m.ids != ids)
          throw ProtocolError("scorer returned rows that do not match the request ids");
        std::copy(m.values.begin(), m.values.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(lo * n_classes));
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };

  if (connections_.size() == 1) {
    work(*connections_.front());
  } else {
    std::vector<std::thread> threads;
    for (auto& c : connections_) threads.emplace_back(work, std::ref(*c));
    for (auto& t : threads) t.join();
  }
  if (error) {
    healthy_ = false;
    std::rethrow_exception(error);
  }
  return out;
}

PrecomputedPassScorer::PrecomputedPassScorer(fs::path source, const Dataset& ds)
    : source_(std::move(source)), ds_(ds) {}

ScorerInfo PrecomputedPassScorer::handshake() {
  if (!fs::exists(source_)) throw IoError("prediction source not found: " + source_.string());
  ScorerInfo info;
  info.class_names = ds_.class_names;
  info.identity = "precomputed:" + source_.filename().string();
  return info;
}

ScoreMatrix PrecomputedPassScorer::score_pass(const std::optional<PerturbationSpec>& spec) {
  const std::string tag = pass_tag(spec);
  const fs::path file = fs::is_directory(source_) ? source_ / (tag + ".csv") : source_;
  if (!fs::exists(file)) throw IoError("no predictions for pass " + tag + " (" + file.string() + ")");
  return load_precomputed(file, ds_, tag);
}

json thresholds_to_json(const ThresholdVector& tv) {
  return {{"policy", policy_name(tv.policy)}, {"values", tv.values}};
}

ThresholdVector thresholds_from_json(const json& j) {
  ThresholdVector tv;
  try {
    const auto policy = parse_policy(j.at("policy").get<std::string>());
    if (!policy) throw ConfigError("thresholds.policy", "unknown threshold policy");
    tv.policy = *policy;
    tv.values = j.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError("thresholds", e.what());
  }
  for (double v : tv.values)
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("thresholds.values", "threshold outside [0,1]");
  return tv;
}

json RunMetadata::to_json() const {
  json j = {{"schema", schema},
            {"dataset", dataset},
            {"config_hash", config_hash},
            {"scorer_identity", scorer_identity},
            {"classes", class_names},
            {"subgroups", subgroup_names},
            {"thresholds", thresholds_to_json(thresholds)},
            {"ece_bins", n_bins},
            {"suite", suite},
            {"failed_specs", failed_specs}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

RunMetadata RunMetadata::from_json(const json& j) {
  RunMetadata m;
  try {
    m.schema = j.at("schema").get<std::string>();
    m.dataset = j.at("dataset").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.scorer_identity = j.at("scorer_identity").get<std::string>();
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    m.subgroup_names = j.at("subgroups").get<std::vector<std::string>>();
    m.thresholds = thresholds_from_json(j.at("thresholds"));
    m.n_bins = j.at("ece_bins").get<std::size_t>();
    m.suite = j.at("suite");
    m.failed_specs = j.at("failed_specs").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError("metadata", e.what());
  }
  static const std::set<std::string> known = {"schema", "dataset", "config_hash", "scorer_identity",
                                              "classes", "subgroups", "thresholds", "ece_bins",
                                              "suite", "failed_specs"};
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) m.extra[k] = v;
  return m;
}

void sort_rows(std::vector<MetricResult>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricResult& a, const MetricResult& b) { return row_key(a) < row_key(b); });
}

std::string config_hash(const StressJob& job) {
  json samples = json::array();
  for (const auto& s : job.dataset.samples) {
    json attrs = json::object();
    for (const auto& [k, v] : s.attributes) attrs[k] = attribute_to_string(v);
    samples.push_back({s.id, s.image_path, s.labels, attrs});
  }
  json attrs = json::array();
  for (const auto& a : job.dataset.attributes)
    attrs.push_back({a.name, a.type == AttributeType::Number ? "number" : "string"});
  json j = {{"dataset", job.dataset.name},
            {"classes", job.dataset.class_names},
            {"attributes", attrs},
            {"samples", samples},
            {"subgroups", to_json(job.subgroups)},
            {"suite", to_json(job.suite)},
            {"policy", policy_name(job.policy)},
            {"bins", job.n_bins}};
  if (job.frozen_thresholds) j["frozen_thresholds"] = thresholds_to_json(*job.frozen_thresholds);
  return sha256_hex(j.dump());
}

json JobState::to_json() const {
  json j = {{"config_hash", config_hash},
            {"completed", std::vector<std::string>(completed.begin(), completed.end())},
            {"failed", std::vector<std::string>(failed.begin(), failed.end())}};
  j["thresholds"] = thresholds ? thresholds_to_json(*thresholds) : json(nullptr);
  return j;
}

JobState JobState::from_json(const json& j) {
  JobState s;
  try {
    s.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& t : j.at("completed")) s.completed.insert(t.get<std::string>());
    for (const auto& t : j.at("failed")) s.failed.insert(t.get<std::string>());
    if (j.contains("thresholds") && !j["thresholds"].is_null())
      s.thresholds = thresholds_from_json(j["thresholds"]);
  } catch (const json::exception& e) {
    throw ConfigError("state", e.what());
  }
  return s;
}

JobState load_state(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open state file " + path.string());
  try {
    return JobState::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("state", path.string() + ": " + e.what());
  }
}

void save_state(const JobState& state, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << state.to_json().dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

CleanResult run_clean(const StressJob& job, PassScorer& scorer) {
  job.validate();
  CleanResult res;
  res.scores = scorer.score_pass(std::nullopt);
  if (job.frozen_thresholds) {
    res.thresholds = *job.frozen_thresholds;
  } else {
    res.thresholds = freeze_thresholds(res.scores, job.dataset, job.policy, &res.warnings);
  }
  write_scores(res.scores, job.dataset.class_names, score_cache(job, std::string(kCleanTag)));
  const auto partition = resolve_subgroups(job.subgroups, job.dataset);
  res.rows = stratified_eval(res.scores, job.dataset, partition, res.thresholds,
                             {job.dataset.name, std::string(kCleanTag), 0, job.n_bins});
  return res;
}

StressOutcome run_stress(const StressJob& job, PassScorer& scorer) {
  job.validate();
  fs::create_directories(job.out_dir);
  const std::string hash = config_hash(job);
  const fs::path state_path = job.out_dir / "state.json";

  JobState state;
  if (job.resume && fs::exists(state_path)) {
    state = load_state(state_path);
    if (state.config_hash != hash)
      throw ConfigError("resume", "configuration changed since the interrupted run (state hash " +
                                      state.config_hash.substr(0, 12) + ", now " + hash.substr(0, 12) + ")");
  }
  state.config_hash = hash;

  const auto partition = resolve_subgroups(job.subgroups, job.dataset);
  const auto specs = build_suite(job.suite);
  const ScorerInfo info = scorer.handshake();
  check_classes(info.class_names, job.dataset.class_names);

  StressOutcome outcome;
  auto& rows = outcome.table.rows;

  auto reusable = [&](const std::string& tag) {
    return job.resume && state.completed.contains(tag) && fs::exists(score_cache(job, tag));
  };

  // Clean baseline: thresholds are frozen here and never touched again.
  ThresholdVector thresholds;
  const std::string clean_tag(kCleanTag);
  if (reusable(clean_tag) && state.thresholds) {
    const auto scores = load_precomputed(score_cache(job, clean_tag), job.dataset, clean_tag);
    thresholds = *state.thresholds;
    auto clean_rows = stratified_eval(scores, job.dataset, partition, thresholds,
                                      {job.dataset.name, clean_tag, 0, job.n_bins});
    rows.insert(rows.end(), clean_rows.begin(), clean_rows.end());
    ++outcome.passes_reused;
  } else {
    std::optional<CleanResult> clean;
    for (int attempt = 0; !clean; ++attempt) {
      try {
        clean = run_clean(job, scorer);
      } catch (const ClassMismatch&) {
        throw;
      } catch (const Error& e) {
        if (attempt >= job.retries) {
          save_state(state, state_path);
          throw Error(std::string("clean pass failed: ") + e.what());
        }
        outcome.warnings.push_back("clean pass attempt " + std::to_string(attempt + 1) + " failed: " + e.what());
      }
    }
    thresholds = clean->thresholds;
    outcome.warnings.insert(outcome.warnings.end(), clean->warnings.begin(), clean->warnings.end());
    rows.insert(rows.end(), clean->rows.begin(), clean->rows.end());
    ++outcome.passes_scored;
  }
  state.thresholds = thresholds;
  state.completed.insert(clean_tag);
  save_state(state, state_path);

  std::vector<std::string> failed;
  for (const auto& spec : specs) {
    const std::string tag = spec.tag();
    const EvalContext ctx{job.dataset.name, std::string(kind_name(spec.kind)), spec.level, job.n_bins};
    std::optional<ScoreMatrix> scores;
    if (reusable(tag)) {
      scores = load_precomputed(score_cache(job, tag), job.dataset, tag);
      ++outcome.passes_reused;
    } else {
      for (int attempt = 0; attempt <= job.retries && !scores; ++attempt) {
        try {
          scores = scorer.score_pass(spec);
        } catch (const ClassMismatch&) {
          throw;
        } catch (const Error& e) {
          outcome.warnings.push_back("pass " + tag + " attempt " + std::to_string(attempt + 1) +
                                     " failed: " + e.what());
        }
      }
      if (scores) {
        write_scores(*scores, job.dataset.class_names, score_cache(job, tag));
        ++outcome.passes_scored;
      }
    }
    if (scores) {
      auto spec_rows = stratified_eval(*scores, job.dataset, partition, thresholds, ctx);
      rows.insert(rows.end(), spec_rows.begin(), spec_rows.end());
      state.completed.insert(tag);
      state.failed.erase(tag);
    } else {
      auto spec_rows = failed_rows(job.dataset, partition, ctx);
      rows.insert(rows.end(), spec_rows.begin(), spec_rows.end());
      state.completed.erase(tag);
      state.failed.insert(tag);
      failed.push_back(tag);
    }
    save_state(state, state_path);
  }

  sort_rows(rows);
  auto& meta = outcome.table.meta;
  meta.dataset = job.dataset.name;
  meta.config_hash = hash;
  meta.scorer_identity = info.identity;
  meta.class_names = job.dataset.class_names;
  for (const auto& g : partition.groups) meta.subgroup_names.push_back(g.name);
  meta.thresholds = thresholds;
  meta.n_bins = job.n_bins;
  meta.suite = to_json(job.suite);
  meta.failed_specs = failed;
  return outcome;
}

std::vector<TrendSummary> summarize_monotonic(const ResultTable& rt, Metric metric, double epsilon) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, int>;
  using CleanKey = std::tuple<std::string, std::string, std::string>;
  std::map<CleanKey, std::optional<double>> clean;
  std::map<Key, std::vector<std::pair<int, std::optional<double>>>> series;
  for (const auto& r : rt.rows) {
    if (r.metric != metric) continue;
    if (r.kind == kCleanTag) {
      clean[{r.dataset, r.class_name, r.subgroup}] = r.value;
    } else {
      series[{r.dataset, r.class_name, r.subgroup, r.kind, r.level < 0 ? -1 : 1}].emplace_back(r.level, r.value);
    }
  }

  std::vector<TrendSummary> out;
  for (auto& [key, points] : series) {
    std::sort(points.begin(), points.end(),
              [](const auto& a, const auto& b) { return std::abs(a.first) < std::abs(b.first); });
    TrendSummary t;
    std::tie(t.dataset, t.class_name, t.subgroup, t.kind, t.sign) = key;
    t.metric = metric;
    if (auto it = clean.find({t.dataset, t.class_name, t.subgroup}); it != clean.end()) t.clean = it->second;
    std::vector<double> defined;
    for (const auto& [level, value] : points) {
      t.levels.push_back(level);
      t.values.push_back(value);
      if (value) defined.push_back(*value);
    }
    bool non_increasing = true;
    bool non_decreasing = true;
    for (std::size_t i = 1; i < defined.size(); ++i) {
      if (defined[i] > defined[i - 1] + epsilon) non_increasing = false;
      if (defined[i] < defined[i - 1] - epsilon) non_decreasing = false;
    }
    if (metric == Metric::FPR) t.monotone = non_increasing || non_decreasing;
    else if (higher_is_better(metric)) t.monotone = non_increasing;
    else t.monotone = non_decreasing;

    if (t.clean && !defined.empty()) {
      const auto [lo, hi] = std::minmax_element(defined.begin(), defined.end());
      if (metric == Metric::FPR) t.max_drop = std::max(std::fabs(*hi - *t.clean), std::fabs(*lo - *t.clean));
      else if (higher_is_better(metric)) t.max_drop = *t.clean - *lo;
      else t.max_drop = *hi - *t.clean;
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<StabilityRow> stability_scores(const ResultTable& rt) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, Metric>;
  using CleanKey = std::tuple<std::string, std::string, std::string, Metric>;
  std::map<CleanKey, std::optional<double>> clean;
  for (const auto& r : rt.rows)
    if (r.kind == kCleanTag) clean[{r.dataset, r.class_name, r.subgroup, r.metric}] = r.value;
  std::map<Key, StabilityRow> acc;
  for (const auto& r : rt.rows) {
    if (r.kind == kCleanTag) continue;
    auto& row = acc[{r.dataset, r.class_name, r.subgroup, r.kind, r.metric}];
    row.dataset = r.dataset;
    row.class_name = r.class_name;
    row.subgroup = r.subgroup;
    row.kind = r.kind;
    row.metric = r.metric;
    const auto it = clean.find({r.dataset, r.class_name, r.subgroup, r.metric});
    if (it == clean.end() || !it->second || !r.value) continue;
    const double dev = std::fabs(*r.value - *it->second);
    row.stability_a = row.stability_a ? std::max(*row.stability_a, dev) : dev;
  }
  std::vector<StabilityRow> out;
  for (auto& [_, row] : acc) out.push_back(std::move(row));
  return out;
}

Comparison compare_runs(const ResultTable& a, const ResultTable& b) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, int, Metric>;
  auto key_of = [](const MetricResult& r) {
    return Key{r.dataset, r.class_name, r.subgroup, r.kind, r.level, r.metric};
  };
  auto describe = [](const Key& k) {
    return std::get<0>(k) + "/" + std::get<1>(k) + "/" + std::get<2>(k) + "/" + std::get<3>(k) +
           std::to_string(std::get<4>(k)) + "/" + std::string(metric_name(std::get<5>(k)));
  };
  std::map<Key, const MetricResult*> ma;
  std::map<Key, const MetricResult*> mb;
  for (const auto& r : a.rows) ma[key_of(r)] = &r;
  for (const auto& r : b.rows) mb[key_of(r)] = &r;

  std::vector<std::string> only_a;
  std::vector<std::string> only_b;
  for (const auto& [k, _] : ma)
    if (!mb.contains(k)) only_a.push_back(describe(k));
  for (const auto& [k, _] : mb)
    if (!ma.contains(k)) only_b.push_back(describe(k));
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "result grids differ: " + std::to_string(only_a.size()) + " cell(s) only in A, " +
                      std::to_string(only_b.size()) + " only in B";
    if (!only_a.empty()) msg += "; first only in A: " + only_a.front();
    if (!only_b.empty()) msg += "; first only in B: " + only_b.front();
    if (a.meta.suite != b.meta.suite) msg += "; suites differ";
    if (a.meta.subgroup_names != b.meta.subgroup_names) msg += "; subgroups differ";
    if (a.meta.class_names != b.meta.class_names) msg += "; classes differ";
    throw ConfigError("compare", msg);
  }

  Comparison cmp;
  for (const auto& [k, ra] : ma) {
    const auto* rb = mb.at(k);
    CellDiff d{*ra, rb->value, std::nullopt};
    if (ra->value && rb->value) d.diff = *rb->value - *ra->value;
    cmp.diffs.push_back(std::move(d));
  }
  auto sa = stability_scores(a);
  auto sb = stability_scores(b);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    sa[i].stability_b = sb[i].stability_a;
    cmp.stability.push_back(std::move(sa[i]));
  }
  return cmp;
}

}  // namespace stress
