#include "stress/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "stress/csv.hpp"
#include "stress/error.hpp"
#include "stress/format.hpp"

namespace stress {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kStatusNames = {"ok", "undefined", "failed"};

std::string value_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string file_safe(std::string_view name) {
  std::string out;
  for (char ch : name) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '-' || ch == '_' || ch == '.';
    out += ok ? ch : '_';
  }
  return out.empty() ? "_" : out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Decimal {
  bool negative = false;
  __int128 mantissa = 0;
  int exponent = 0;
};

std::optional<Decimal> parse_decimal(std::string_view s) {
  Decimal d;
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') {
    d.negative = true;
    ++i;
  }
  int digits = 0;
  bool seen_point = false;
  for (; i < s.size() && s[i] != 'e'; ++i) {
    if (s[i] == '.') {
      seen_point = true;
      continue;
    }
    if (s[i] < '0' || s[i] > '9' || ++digits > 30) return std::nullopt;
    d.mantissa = d.mantissa * 10 + (s[i] - '0');
    if (seen_point) --d.exponent;
  }
  if (i < s.size()) {
    const auto e = parse_int(s.substr(i + 1));
    if (!e) return std::nullopt;
    d.exponent += static_cast<int>(*e);
  }
  if (d.negative) d.mantissa = -d.mantissa;
  return d;
}

std::string int128_text(__int128 v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  if (neg) v = -v;
  std::string s;
  while (v > 0) {
    s += static_cast<char>('0' + static_cast<int>(v % 10));
    v /= 10;
  }
  if (neg) s += '-';
  return {s.rbegin(), s.rend()};
}

using CellKey = std::tuple<std::string, std::string, std::string, std::string, int, Metric>;

std::vector<std::string> subgroup_order(const ResultTable& rt) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& g : rt.meta.subgroup_names)
    if (seen.insert(g).second) order.push_back(g);
  std::set<std::string> extra;
  for (const auto& r : rt.rows)
    if (!seen.contains(r.subgroup)) extra.insert(r.subgroup);
  order.insert(order.end(), extra.begin(), extra.end());
  return order;
}

}  // namespace

std::string_view status_name(ResultStatus s) noexcept { return kStatusNames[static_cast<std::size_t>(s)]; }

std::optional<ResultStatus> parse_status(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i)
    if (kStatusNames[i] == s) return static_cast<ResultStatus>(i);
  return std::nullopt;
}

void write_results_csv(const std::vector<MetricResult>& rows, std::ostream& os) {
  os << "# " << kResultsSchema << '\n';
  csv::write_row(os, {"dataset", "class", "subgroup", "kind", "level", "metric", "value", "n", "status"});
  for (const auto& r : rows) {
    csv::write_row(os, {r.dataset, r.class_name, r.subgroup, r.kind, std::to_string(r.level),
                        std::string(metric_name(r.metric)), value_text(r.value), std::to_string(r.n),
                        std::string(status_name(r.status))});
  }
}

std::vector<MetricResult> parse_results_csv(std::string_view text, const std::string& source) {
  std::size_t first_line = 1;
  if (text.starts_with('#')) {
    const auto eol = text.find('\n');
    std::string_view head = text.substr(1, eol == std::string_view::npos ? text.size() - 1 : eol - 1);
    while (!head.empty() && (head.front() == ' ')) head.remove_prefix(1);
    while (!head.empty() && (head.back() == '\r' || head.back() == ' ')) head.remove_suffix(1);
    if (head != kResultsSchema)
      throw ConfigError(source, "unsupported results schema '" + std::string(head) + "', expected " +
                                    std::string(kResultsSchema));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    first_line = 2;
  }
  std::vector<std::size_t> lines;
  const auto table = csv::parse(text, &lines);
  if (table.empty()) throw ConfigError(source, "empty results file");
  const auto& header = table.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"dataset", "class", "subgroup", "kind", "level", "metric", "value"})
    if (!col.contains(required)) throw ConfigError(source, std::string("missing column '") + required + "'");

  std::vector<MetricResult> rows;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    const std::size_t line = lines[r] + first_line - 1;
    auto fail = [&](const std::string& what) -> ManifestError { return ManifestError(line, source + ": " + what); };
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) throw fail("expected " + std::to_string(header.size()) + " fields");
    MetricResult m;
    m.dataset = row[col["dataset"]];
    m.class_name = row[col["class"]];
    m.subgroup = row[col["subgroup"]];
    m.kind = row[col["kind"]];
    const auto level = parse_int(row[col["level"]]);
    if (!level) throw fail("bad level '" + row[col["level"]] + "'");
    m.level = static_cast<int>(*level);
    const auto metric = parse_metric(row[col["metric"]]);
    if (!metric) throw fail("unknown metric '" + row[col["metric"]] + "'");
    m.metric = *metric;
    const std::string& value = row[col["value"]];
    if (value != "NA" && !value.empty()) {
      m.value = parse_double(value);
      if (!m.value) throw fail("bad value '" + value + "'");
    }
    if (col.contains("n")) {
      const auto n = parse_int(row[col["n"]]);
      if (!n || *n < 0) throw fail("bad n '" + row[col["n"]] + "'");
      m.n = static_cast<std::size_t>(*n);
    }
    m.status = m.value ? ResultStatus::Ok : ResultStatus::Undefined;
    if (col.contains("status")) {
      const auto st = parse_status(row[col["status"]]);
      if (!st) throw fail("unknown status '" + row[col["status"]] + "'");
      m.status = *st;
    }
    rows.push_back(std::move(m));
  }
  return rows;
}

void write_text(const fs::path& path, std::string_view text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_results(const ResultTable& rt, const fs::path& dir) {
  std::ostringstream csv_text;
  write_results_csv(rt.rows, csv_text);
  write_text(dir / "results.csv", csv_text.str());
  write_text(dir / "metadata.json", rt.meta.to_json().dump(2) + "\n");
}

ResultTable read_results(const fs::path& path) {
  const fs::path csv_path = fs::is_directory(path) ? path / "results.csv" : path;
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open results file " + csv_path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ResultTable rt;
  rt.rows = parse_results_csv(ss.str(), csv_path.string());
  const fs::path meta_path = csv_path.parent_path() / "metadata.json";
  if (fs::exists(meta_path)) {
    std::ifstream mj(meta_path);
    try {
      rt.meta = RunMetadata::from_json(json::parse(mj));
    } catch (const json::parse_error& e) {
      throw ConfigError("metadata", meta_path.string() + ": " + e.what());
    }
  } else {
    std::set<std::string> classes;
    for (const auto& r : rt.rows) {
      if (rt.meta.dataset.empty()) rt.meta.dataset = r.dataset;
      if (classes.insert(r.class_name).second) rt.meta.class_names.push_back(r.class_name);
    }
    rt.meta.subgroup_names = subgroup_order(rt);
  }
  return rt;
}

double decimal_difference(double hi, double lo) {
  const auto a = parse_decimal(format_double(hi));
  const auto b = parse_decimal(format_double(lo));
  if (!a || !b) return hi - lo;
  const int exp = std::min(a->exponent, b->exponent);
  constexpr __int128 kLimit = static_cast<__int128>(1) << 120;
  auto scaled = [&](const Decimal& d) -> std::optional<__int128> {
    __int128 m = d.mantissa;
    for (int e = d.exponent; e > exp; --e) {
      if (m > kLimit / 10 || m < -kLimit / 10) return std::nullopt;
      m *= 10;
    }
    return m;
  };
  const auto ma = scaled(*a);
  const auto mb = scaled(*b);
  if (!ma || !mb) return hi - lo;
  const auto exact = parse_double(int128_text(*ma - *mb) + "e" + std::to_string(exp));
  return exact ? *exact : hi - lo;
}

std::vector<DisparityRow> disparity_table(const ResultTable& rt) {
  const auto order = subgroup_order(rt);
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;

  using Key = std::tuple<std::string, std::string, Metric, std::string, int>;
  std::map<Key, std::vector<const MetricResult*>> cells;
  for (const auto& r : rt.rows)
    if (r.subgroup != kAllGroup) cells[{r.dataset, r.class_name, r.metric, r.kind, r.level}].push_back(&r);

  std::vector<DisparityRow> out;
  for (auto& [key, members] : cells) {
    std::stable_sort(members.begin(), members.end(), [&](const MetricResult* a, const MetricResult* b) {
      return rank[a->subgroup] < rank[b->subgroup];
    });
    DisparityRow d;
    std::tie(d.dataset, d.class_name, d.metric, d.kind, d.level) = key;
    const MetricResult* lo = nullptr;
    const MetricResult* hi = nullptr;
    for (const auto* m : members) {
      const std::optional<double> v = m->status == ResultStatus::Ok ? m->value : std::nullopt;
      d.values.emplace_back(m->subgroup, v);
      if (!v) {
        d.undefined.push_back(m->subgroup);
        continue;
      }
      if (!lo || *v < *lo->value || (*v == *lo->value && m->subgroup < lo->subgroup)) lo = m;
      if (!hi || *v > *hi->value || (*v == *hi->value && m->subgroup < hi->subgroup)) hi = m;
    }
    if (lo) {
      d.gap = decimal_difference(*hi->value, *lo->value);
      d.worst = higher_is_better(d.metric) ? lo->subgroup : hi->subgroup;
    }
    out.push_back(std::move(d));
  }
  return out;
}

void write_disparity(const std::vector<DisparityRow>& rows, const std::vector<std::string>& subgroups,
                     const fs::path& path) {
  std::vector<std::string> groups;
  for (const auto& g : subgroups)
    if (g != kAllGroup) groups.push_back(g);
  std::ostringstream os;
  csv::Row header = {"dataset", "class", "metric", "kind", "level", "gap", "worst_subgroup", "undefined_subgroups"};
  for (const auto& g : groups) header.push_back("value:" + g);
  csv::write_row(os, header);
  for (const auto& d : rows) {
    csv::Row row = {d.dataset, d.class_name, std::string(metric_name(d.metric)), d.kind,
                    std::to_string(d.level), value_text(d.gap), d.worst, join(d.undefined, ';')};
    for (const auto& g : groups) {
      std::string cell = "NA";
      for (const auto& [name, v] : d.values)
        if (name == g) cell = value_text(v);
      row.push_back(cell);
    }
    csv::write_row(os, row);
  }
  write_text(path, os.str());
}

void write_trends(const std::vector<TrendSummary>& trends, const fs::path& path) {
  std::ostringstream os;
  csv::write_row(os, {"dataset", "class", "subgroup", "kind", "direction", "metric", "clean", "levels",
                      "values", "monotone", "max_drop"});
  for (const auto& t : trends) {
    std::vector<std::string> levels;
    std::vector<std::string> values;
    for (std::size_t i = 0; i < t.levels.size(); ++i) {
      levels.push_back(std::to_string(t.levels[i]));
      values.push_back(value_text(t.values[i]));
    }
    csv::write_row(os, {t.dataset, t.class_name, t.subgroup, t.kind, t.sign < 0 ? "-" : "+",
                        std::string(metric_name(t.metric)), value_text(t.clean), join(levels, ';'),
                        join(values, ';'), t.monotone ? "true" : "false", value_text(t.max_drop)});
  }
  write_text(path, os.str());
}

void write_comparison(const Comparison& cmp, const fs::path& dir) {
  std::ostringstream diffs;
  csv::write_row(diffs, {"dataset", "class", "subgroup", "kind", "level", "metric", "value_a", "value_b", "diff"});
  for (const auto& d : cmp.diffs) {
    csv::write_row(diffs, {d.a.dataset, d.a.class_name, d.a.subgroup, d.a.kind, std::to_string(d.a.level),
                           std::string(metric_name(d.a.metric)), value_text(d.a.value), value_text(d.b),
                           value_text(d.diff)});
  }
  write_text(dir / "compare.csv", diffs.str());

  std::ostringstream stab;
  csv::write_row(stab, {"dataset", "class", "subgroup", "kind", "metric", "stability_a", "stability_b"});
  for (const auto& s : cmp.stability) {
    csv::write_row(stab, {s.dataset, s.class_name, s.subgroup, s.kind, std::string(metric_name(s.metric)),
                          value_text(s.stability_a), value_text(s.stability_b)});
  }
  write_text(dir / "stability.csv", stab.str());
}

json PlotStyle::to_json() const {
  return {{"width", width},
          {"height", height},
          {"margins", {margin_left, margin_right, margin_top, margin_bottom}},
          {"palette", palette},
          {"y_domain", {0, 1}}};
}

std::string render_plot(const ResultTable& rt, Metric metric, const std::string& class_name,
                        const std::string& kind, const PlotStyle& style) {
  const auto order = subgroup_order(rt);
  std::map<std::string, std::map<int, std::optional<double>>> series;
  int xmin = 0;
  int xmax = 0;
  for (const auto& r : rt.rows) {
    if (r.metric != metric || r.class_name != class_name) continue;
    if (r.kind != kind && r.kind != kCleanTag) continue;
    const int x = r.kind == kCleanTag ? 0 : r.level;
    series[r.subgroup][x] = r.status == ResultStatus::Ok ? r.value : std::nullopt;
    if (r.kind == kind) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  }
  if (xmin == xmax) xmax = xmin + 1;

  const double plot_w = style.width - style.margin_left - style.margin_right;
  const double plot_h = style.height - style.margin_top - style.margin_bottom;
  auto px = [&](double x) { return style.margin_left + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return style.margin_top + (1.0 - y) * plot_h; };
  auto f = [](double v) { return format_fixed(v, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
     << "\" viewBox=\"0 0 " << style.width << ' ' << style.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << style.width << "\" height=\"" << style.height << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << style.margin_left << "\" y=\"" << style.margin_top - 15 << "\" font-size=\"13\">"
     << xml_escape(std::string(metric_name(metric)) + " | " + class_name + " | " + kind) << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    os << "<line x1=\"" << f(px(xmin)) << "\" y1=\"" << f(py(y)) << "\" x2=\"" << f(px(xmax)) << "\" y2=\""
       << f(py(y)) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << f(px(xmin) - 6) << "\" y=\"" << f(py(y) + 4) << "\" text-anchor=\"end\">"
       << format_fixed(y, 2) << "</text>\n";
  }
  for (int x = xmin; x <= xmax; ++x) {
    os << "<line x1=\"" << f(px(x)) << "\" y1=\"" << f(py(0)) << "\" x2=\"" << f(px(x)) << "\" y2=\""
       << f(py(0) + 4) << "\" stroke=\"#000000\"/>\n";
    os << "<text x=\"" << f(px(x)) << "\" y=\"" << f(py(0) + 16) << "\" text-anchor=\"middle\">"
       << (x > 0 && xmin < 0 ? "+" : "") << x << "</text>\n";
  }
  os << "<rect x=\"" << style.margin_left << "\" y=\"" << style.margin_top << "\" width=\"" << f(plot_w)
     << "\" height=\"" << f(plot_h) << "\" fill=\"none\" stroke=\"#000000\"/>\n";
  os << "<text x=\"" << f(style.margin_left + plot_w / 2) << "\" y=\"" << style.height - 12
     << "\" text-anchor=\"middle\">severity level (clean = 0)</text>\n";
  os << "<text x=\"14\" y=\"" << f(style.margin_top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << f(style.margin_top + plot_h / 2) << ")\">" << metric_name(metric) << "</text>\n";

  std::size_t legend = 0;
  for (std::size_t gi = 0; gi < order.size(); ++gi) {
    const auto it = series.find(order[gi]);
    if (it == series.end()) continue;
    const std::string& color = style.palette[gi % style.palette.size()];
    std::vector<std::vector<std::pair<double, double>>> segments(1);
    for (const auto& [x, v] : it->second) {
      if (!v) {
        if (!segments.back().empty()) segments.emplace_back();
        continue;
      }
      segments.back().emplace_back(px(x), py(std::clamp(*v, 0.0, 1.0)));
    }
    for (const auto& seg : segments) {
      if (seg.empty()) continue;
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < seg.size(); ++k) os << (k ? " " : "") << f(seg[k].first) << ',' << f(seg[k].second);
      os << "\"/>\n";
      for (const auto& [x, y] : seg)
        os << "<circle cx=\"" << f(x) << "\" cy=\"" << f(y) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = style.margin_top + 10 + 16.0 * static_cast<double>(legend++);
    const double lx = style.width - style.margin_right + 12;
    os << "<line x1=\"" << f(lx) << "\" y1=\"" << f(ly) << "\" x2=\"" << f(lx + 18) << "\" y2=\"" << f(ly)
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << f(lx + 24) << "\" y=\"" << f(ly + 4) << "\">" << xml_escape(order[gi]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> emit_plots(const ResultTable& rt, Metric metric, const fs::path& dir, const PlotStyle& style) {
  std::set<std::string> kinds;
  std::vector<std::string> classes = rt.meta.class_names;
  std::set<std::string> known(classes.begin(), classes.end());
  for (const auto& r : rt.rows) {
    if (r.kind != kCleanTag) kinds.insert(r.kind);
    if (known.insert(r.class_name).second) classes.push_back(r.class_name);
  }
  std::vector<fs::path> written;
  for (const auto& cls : classes) {
    for (const auto& kind : kinds) {
      const fs::path path = dir / metric_name(metric) / (file_safe(cls) + "__" + file_safe(kind) + ".svg");
      write_text(path, render_plot(rt, metric, cls, kind, style));
      written.push_back(path);
    }
  }
  return written;
}

void write_reports(ResultTable& rt, const fs::path& dir, const ReportOptions& opts) {
  rt.meta.extra["report"] = {{"monotone_epsilon", opts.monotone_epsilon},
                             {"plot", opts.style.to_json()},
                             {"disparity_excludes", kAllGroup}};
  write_results(rt, dir);
  write_disparity(disparity_table(rt), subgroup_order(rt), dir / "disparity.csv");
  std::vector<TrendSummary> trends;
  for (Metric m : kAllMetrics) {
    auto t = summarize_monotonic(rt, m, opts.monotone_epsilon);
    trends.insert(trends.end(), t.begin(), t.end());
  }
  write_trends(trends, dir / "trends.csv");
  if (opts.plots)
    for (Metric m : kAllMetrics) emit_plots(rt, m, dir / "plots", opts.style);
}

}  // namespace stress
