#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "stress/config.hpp"
#include "stress/dataset.hpp"
#include "stress/error.hpp"
#include "stress/format.hpp"
#include "stress/harness.hpp"
#include "stress/image_io.hpp"
#include "stress/perturb.hpp"
#include "stress/report.hpp"
#include "stress/scorer.hpp"
#include "stress/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stress;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

void require_file(const std::string& what, const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError(what + " not found: " + path.string());
}

fs::path resolve_out(const std::string& out) {
  if (!out.empty()) return out;
  if (auto e = env("STRESS_OUT_DIR")) return *e;
  throw ConfigError("out", "no output directory (use --out or STRESS_OUT_DIR)");
}

std::size_t resolve_workers(std::size_t flag) {
  if (flag > 0) return flag;
  if (auto e = env("STRESS_WORKERS")) {
    const auto v = parse_int(*e);
    if (!v || *v < 1) throw ConfigError("STRESS_WORKERS", "must be a positive integer, got '" + *e + "'");
    return static_cast<std::size_t>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ThresholdPolicy resolve_policy(const std::string& name) {
  const auto p = parse_policy(name);
  if (!p) throw ConfigError("threshold-policy", "unknown policy '" + name + "' (fixed | f1-optimal-on-clean)");
  return *p;
}

// Thresholds from an earlier run: a results directory, its metadata.json or a state.json.
ThresholdVector load_thresholds(const fs::path& source, const Dataset& ds) {
  const fs::path file = fs::is_directory(source) ? source / "metadata.json" : source;
  require_file("threshold source", file);
  std::ifstream in(file);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("thresholds-from", file.string() + ": " + e.what());
  }
  if (!j.contains("thresholds") || j["thresholds"].is_null())
    throw ConfigError("thresholds-from", file.string() + " holds no thresholds");
  if (j.contains("classes") && j["classes"].get<std::vector<std::string>>() != ds.class_names)
    throw ClassMismatch("thresholds in " + file.string() + " were frozen for different classes");
  return thresholds_from_json(j["thresholds"]);
}

struct DataArgs {
  std::string manifest;
  std::string config;
};

std::pair<StudyConfig, Dataset> load_data(const DataArgs& a) {
  require_file("config", a.config);
  require_file("manifest", a.manifest);
  StudyConfig study = load_study_config(a.config);
  Dataset ds = load_manifest(a.manifest, study.schema, study.dataset_name);
  resolve_subgroups(study.subgroups, ds);
  return {std::move(study), std::move(ds)};
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// --- perturb ---------------------------------------------------------------

struct PerturbArgs {
  std::string input;
  std::string output;
  std::string kind;
  int level = 0;
  bool grid = false;
  int columns = 6;
  std::string config;
};

int cmd_perturb(const PerturbArgs& a) {
  const ImageBuffer img = read_image(a.input);
  const SuiteConfig suite = a.config.empty() ? SuiteConfig::defaults() : load_study_config(a.config).suite;
  ImageBuffer out;
  if (a.grid) {
    const auto specs = build_suite(suite);
    out = contact_sheet(img, specs, a.columns);
    std::cerr << "wrote " << specs.size() << " tiles to " << a.output << '\n';
  } else {
    if (a.kind.empty()) throw InvalidParameter("--kind is required unless --grid is given");
    const auto kind = parse_kind(a.kind);
    if (!kind) throw InvalidParameter("unknown perturbation kind '" + a.kind + "'");
    const double parameter = resolve_severity(*kind, a.level, suite.table);
    out = apply(PerturbationSpec{*kind, a.level, parameter}, img);
  }
  const std::string ext = fs::path(a.output).extension().string();
  if (ext == ".jpg" || ext == ".jpeg") write_bytes(a.output, encode_jpeg(out));
  else write_png(out, a.output);
  return kExitOk;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  DataArgs data;
  std::string out;
  std::string scorer_cmd;
  std::string scorer_url;
  std::string predictions;
  std::string policy = "f1-optimal-on-clean";
  std::string thresholds_from;
  std::size_t bins = kDefaultBins;
  std::size_t workers = 0;
  std::size_t batch = 32;
  int retries = 2;
  bool resume = false;
  bool keep_images = false;
  bool no_plots = false;
  double epsilon = kDefaultMonotoneEpsilon;
  double handshake_timeout = 30;
  double job_timeout = 300;
};

int cmd_run(const RunArgs& a) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_now();
  const int sources = !a.scorer_cmd.empty() + !a.scorer_url.empty() + !a.predictions.empty();
  if (sources != 1)
    throw ConfigError("scorer", "give exactly one of --scorer-cmd, --scorer-url, --predictions");
  auto [study, ds] = load_data(a.data);

  StressJob job;
  job.dataset = std::move(ds);
  job.subgroups = study.subgroups;
  job.suite = study.suite;
  job.policy = resolve_policy(a.policy);
  job.n_bins = a.bins;
  job.batch_size = a.batch;
  job.workers = a.predictions.empty() ? resolve_workers(a.workers) : 1;
  job.retries = a.retries;
  job.out_dir = resolve_out(a.out);
  job.resume = a.resume;
  job.keep_images = a.keep_images;
  if (!a.thresholds_from.empty()) job.frozen_thresholds = load_thresholds(a.thresholds_from, job.dataset);
  job.validate();

  std::unique_ptr<PassScorer> scorer;
  std::string scorer_desc;
  if (!a.predictions.empty()) {
    scorer = std::make_unique<PrecomputedPassScorer>(a.predictions, job.dataset);
    scorer_desc = "predictions:" + a.predictions;
  } else {
    const auto report = validate(job.dataset, true);
    if (!report.missing_files.empty())
      throw IoError(std::to_string(report.missing_files.size()) + " image file(s) missing, first: " +
                    report.missing_files.front());
    ScorerTimeouts timeouts;
    timeouts.handshake = std::chrono::milliseconds(static_cast<long long>(a.handshake_timeout * 1000));
    timeouts.job = std::chrono::milliseconds(static_cast<long long>(a.job_timeout * 1000));
    const std::string endpoint = a.scorer_cmd.empty() ? a.scorer_url : a.scorer_cmd;
    std::optional<fs::path> keep;
    if (a.keep_images) keep = job.out_dir / "images";
    scorer = std::make_unique<ImagePassScorer>(make_scorer_factory(endpoint, timeouts), job.dataset, job.batch_size,
                                               job.workers, keep);
    scorer_desc = a.scorer_cmd.empty() ? "url:" + a.scorer_url : "cmd:" + a.scorer_cmd;
  }

  fs::create_directories(job.out_dir);
  const json echo = {{"study", to_json(study)},
                     {"run",
                      {{"manifest", a.data.manifest},
                       {"config", a.data.config},
                       {"scorer", scorer_desc},
                       {"threshold_policy", std::string(policy_name(job.policy))},
                       {"thresholds_from", a.thresholds_from},
                       {"bins", job.n_bins},
                       {"batch", job.batch_size},
                       {"workers", job.workers},
                       {"retries", job.retries},
                       {"keep_images", job.keep_images},
                       {"monotone_epsilon", a.epsilon}}}};
  write_text(job.out_dir / "config.json", echo.dump(2) + "\n");

  StressOutcome outcome = run_stress(job, *scorer);
  print_warnings(outcome.warnings);
  ReportOptions opts;
  opts.monotone_epsilon = a.epsilon;
  opts.plots = !a.no_plots;
  write_reports(outcome.table, job.out_dir, opts);

  const int code = outcome.complete() ? kExitOk : kExitPartial;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const json log = {{"started", started_at},
                    {"finished", utc_now()},
                    {"seconds", seconds},
                    {"passes_scored", outcome.passes_scored},
                    {"passes_reused", outcome.passes_reused},
                    {"failed_specs", outcome.table.meta.failed_specs},
                    {"warnings", outcome.warnings},
                    {"exit_code", code}};
  write_text(job.out_dir / "run_log.json", log.dump(2) + "\n");

  std::cout << "passes scored: " << outcome.passes_scored << ", reused: " << outcome.passes_reused
            << ", failed: " << outcome.table.meta.failed_specs.size() << '\n'
            << "results: " << (job.out_dir / "results.csv").string() << '\n';
  return code;
}

// --- metrics ---------------------------------------------------------------

struct MetricsArgs {
  DataArgs data;
  std::string predictions;
  std::string results;
  std::string tag = std::string(kCleanTag);
  std::string out;
  std::string policy = "f1-optimal-on-clean";
  std::string thresholds_from;
  std::size_t bins = kDefaultBins;
};

void print_disparity(const std::vector<DisparityRow>& rows) {
  for (const auto& d : rows) {
    if (!d.gap) continue;
    std::cout << d.class_name << ' ' << metric_name(d.metric) << ' ' << d.kind;
    if (d.kind != kCleanTag) std::cout << ' ' << d.level;
    std::cout << ": gap " << format_double(*d.gap) << " (worst " << d.worst << ")";
    if (!d.undefined.empty()) std::cout << ", " << d.undefined.size() << " undefined";
    std::cout << '\n';
  }
}

int cmd_metrics(const MetricsArgs& a) {
  const fs::path out = resolve_out(a.out);
  if (!a.results.empty() == !a.predictions.empty())
    throw ConfigError("metrics", "give exactly one of --predictions or --results");
  if (!a.results.empty()) {
    ResultTable rt = read_results(a.results);
    const auto rows = disparity_table(rt);
    std::vector<std::string> groups = rt.meta.subgroup_names;
    fs::create_directories(out);
    write_disparity(rows, groups, out / "disparity.csv");
    print_disparity(rows);
    return kExitOk;
  }
  if (a.data.manifest.empty() || a.data.config.empty())
    throw ConfigError("metrics", "--predictions needs --manifest and --config");
  auto [study, ds] = load_data(a.data);
  require_file("predictions", a.predictions);
  std::vector<std::string> warnings;
  const ScoreMatrix scores = load_precomputed(a.predictions, ds, a.tag, &warnings);
  const ThresholdVector thresholds = a.thresholds_from.empty()
                                         ? freeze_thresholds(scores, ds, resolve_policy(a.policy), &warnings)
                                         : load_thresholds(a.thresholds_from, ds);
  const auto partition = resolve_subgroups(study.subgroups, ds);
  ResultTable rt;
  rt.rows = stratified_eval(scores, ds, partition, thresholds, {ds.name, std::string(kCleanTag), 0, a.bins});
  sort_rows(rt.rows);
  rt.meta.dataset = ds.name;
  rt.meta.scorer_identity = "predictions:" + fs::path(a.predictions).filename().string();
  rt.meta.class_names = ds.class_names;
  for (const auto& g : partition.groups) rt.meta.subgroup_names.push_back(g.name);
  rt.meta.thresholds = thresholds;
  rt.meta.n_bins = a.bins;
  rt.meta.suite = json::object();
  StressJob hash_job;
  hash_job.dataset = ds;
  hash_job.subgroups = study.subgroups;
  hash_job.policy = thresholds.policy;
  hash_job.n_bins = a.bins;
  rt.meta.config_hash = config_hash(hash_job);
  print_warnings(warnings);
  ReportOptions opts;
  opts.plots = false;
  write_reports(rt, out, opts);
  print_disparity(disparity_table(rt));
  return kExitOk;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  SynthConfig cfg;
  std::string classes;
  std::vector<std::string> attributes;
  std::string out;
};

int cmd_synth(SynthArgs a) {
  if (!a.classes.empty()) {
    a.cfg.class_names.clear();
    std::stringstream ss(a.classes);
    for (std::string c; std::getline(ss, c, ',');) a.cfg.class_names.push_back(c);
  }
  if (!a.attributes.empty()) {
    a.cfg.attributes.clear();
    for (const auto& s : a.attributes) a.cfg.attributes.push_back(parse_attribute_spec(s));
  }
  const fs::path out = resolve_out(a.out);
  const SynthOutput synth = generate_synth(a.cfg);
  write_synth(synth, out);
  std::cout << "wrote " << synth.dataset.size() << " samples to " << out.string() << '\n'
            << "closed-form clean AUC: " << format_double(synth_auc(a.cfg.separability)) << '\n';
  return kExitOk;
}

// --- compare / validate ----------------------------------------------------

int cmd_compare(const std::string& a, const std::string& b, const std::string& out_flag) {
  const ResultTable ra = read_results(a);
  const ResultTable rb = read_results(b);
  const Comparison cmp = compare_runs(ra, rb);
  const fs::path out = resolve_out(out_flag);
  write_comparison(cmp, out);
  std::cout << cmp.diffs.size() << " cells compared; written to " << out.string() << '\n';
  return kExitOk;
}

int cmd_validate(const DataArgs& data, bool check_files) {
  auto [study, ds] = load_data(data);
  const auto rep = validate(ds, check_files);
  std::cout << "samples: " << ds.size() << '\n';
  for (std::size_t c = 0; c < ds.n_classes(); ++c)
    std::cout << "positives " << ds.class_names[c] << ": " << rep.positives_per_class[c] << '\n';
  for (const auto& [attr, hist] : rep.attribute_histograms)
    for (const auto& [value, count] : hist) std::cout << attr << '=' << (value.empty() ? "(unknown)" : value) << ": " << count << '\n';
  const auto partition = resolve_subgroups(study.subgroups, ds);
  for (const auto& g : partition.groups)
    std::cout << "subgroup " << g.name << ": " << g.indices.size() << " (unknown excluded: " << g.excluded_unknown << ")\n";
  print_warnings(rep.warnings);
  for (const auto& f : rep.missing_files) std::cerr << "missing: " << f << '\n';
  return rep.missing_files.empty() ? kExitOk : kExitFatal;
}

void add_data_options(CLI::App* sub, DataArgs& d, bool required) {
  auto* m = sub->add_option("--manifest", d.manifest, "manifest CSV (id, image_path, class columns, attributes)");
  auto* c = sub->add_option("--config", d.config, "study config JSON (classes, attributes, subgroups, suite)");
  if (required) {
    m->required();
    c->required();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive stress testing of image classifiers with subgroup-stratified metrics.\n"
               "Environment: STRESS_OUT_DIR (default for --out), STRESS_WORKERS (default for --workers).\n"
               "Exit codes: 0 complete, 2 partial (failed perturbation passes), 1 fatal."};
  app.require_subcommand(1);

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "Apply one perturbation to an image, or render the whole suite as a grid");
  perturb->add_option("input", pa.input, "input image (PNG or JPEG)")->required();
  perturb->add_option("-o,--out", pa.output, "output image (.png, or .jpg)")->required();
  perturb->add_option("--kind", pa.kind, "gamma | contrast | brightness | sharpness | blur");
  perturb->add_option("--level", pa.level, "signed level: -3..3 without 0, or 1..6 for blur");
  perturb->add_flag("--grid", pa.grid, "contact sheet of every suite perturbation");
  perturb->add_option("--columns", pa.columns, "tiles per row for --grid")->check(CLI::PositiveNumber);
  perturb->add_option("--config", pa.config, "study config whose suite section is used");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Clean baseline plus the full perturbation sweep, with reports");
  add_data_options(run, ra.data, true);
  run->add_option("--out", ra.out, "output directory (default: $STRESS_OUT_DIR)");
  run->add_option("--scorer-cmd", ra.scorer_cmd, "scorer command line speaking the stdio protocol");
  run->add_option("--scorer-url", ra.scorer_url, "scorer HTTP endpoint accepting the same JSON messages");
  run->add_option("--predictions", ra.predictions, "precomputed predictions: directory of <tag>.csv or one tagged CSV");
  run->add_option("--threshold-policy", ra.policy, "fixed | f1-optimal-on-clean");
  run->add_option("--thresholds-from", ra.thresholds_from, "reuse thresholds frozen by an earlier run (dir or metadata.json)");
  run->add_option("--bins", ra.bins, "ECE bins")->check(CLI::PositiveNumber);
  run->add_option("--workers", ra.workers, "parallel scorer connections (default: $STRESS_WORKERS or CPU count)");
  run->add_option("--batch", ra.batch, "images per score job")->check(CLI::PositiveNumber);
  run->add_option("--retries", ra.retries, "retries per failing pass")->check(CLI::NonNegativeNumber);
  run->add_flag("--resume", ra.resume, "reuse passes completed by an interrupted run in --out");
  run->add_flag("--keep-images", ra.keep_images, "write the perturbed images to <out>/images");
  run->add_flag("--no-plots", ra.no_plots, "skip SVG plots");
  run->add_option("--epsilon", ra.epsilon, "monotonicity tolerance");
  run->add_option("--handshake-timeout", ra.handshake_timeout, "seconds to wait for the scorer handshake");
  run->add_option("--job-timeout", ra.job_timeout, "seconds to wait for each score job");

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Clean metrics and disparity from existing predictions or results");
  add_data_options(metrics, ma.data, false);
  metrics->add_option("--predictions", ma.predictions, "prediction CSV (id, [tag], classes...)");
  metrics->add_option("--tag", ma.tag, "rows of this tag when the CSV has a tag column");
  metrics->add_option("--results", ma.results, "results CSV or directory; only disparity is recomputed");
  metrics->add_option("--out", ma.out, "output directory (default: $STRESS_OUT_DIR)");
  metrics->add_option("--threshold-policy", ma.policy, "fixed | f1-optimal-on-clean");
  metrics->add_option("--thresholds-from", ma.thresholds_from, "thresholds frozen by an earlier run");
  metrics->add_option("--bins", ma.bins, "ECE bins")->check(CLI::PositiveNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset, study config and stub scorer data");
  synth->add_option("--seed", sa.cfg.seed, "random seed");
  synth->add_option("--n", sa.cfg.n, "number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--classes", sa.classes, "comma-separated class names");
  synth->add_option("--attribute", sa.attributes, "name=value:share,... (repeatable; shares sum to 1)");
  synth->add_option("--separability", sa.cfg.separability, "0 = chance, 0.5 and above = separable");
  synth->add_option("--prevalence", sa.cfg.prevalence, "positive share per class");
  synth->add_option("--size", sa.cfg.size, "image height and width");
  synth->add_option("--dataset", sa.cfg.dataset_name, "dataset name");
  synth->add_option("--out", sa.out, "output directory (default: $STRESS_OUT_DIR)");

  std::string cmp_a;
  std::string cmp_b;
  std::string cmp_out;
  auto* compare = app.add_subcommand("compare", "Per-cell differences and stability scores of two runs");
  compare->add_option("a", cmp_a, "first results directory")->required();
  compare->add_option("b", cmp_b, "second results directory")->required();
  compare->add_option("--out", cmp_out, "output directory (default: $STRESS_OUT_DIR)");

  DataArgs va;
  bool check_files = false;
  auto* val = app.add_subcommand("validate", "Check a manifest against a study config");
  add_data_options(val, va, true);
  val->add_flag("--check-files", check_files, "also check that every image file exists");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitFatal;
  }

  try {
    if (*perturb) return cmd_perturb(pa);
    if (*run) return cmd_run(ra);
    if (*metrics) return cmd_metrics(ma);
    if (*synth) return cmd_synth(sa);
    if (*compare) return cmd_compare(cmp_a, cmp_b, cmp_out);
    if (*val) return cmd_validate(va, check_files);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}
