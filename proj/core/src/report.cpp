#include "mergenet/report.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mergenet/checkpoint.hpp"
#include "mergenet/csv.hpp"
#include "mergenet/errors.hpp"

namespace mergenet {

namespace fs = std::filesystem;

std::array<std::optional<double>, 8> summarize_records(const std::vector<RunRecord>& records) {
  std::array<std::optional<double>, 8> out;
  auto update = [&](std::size_t base, const RunRecord& r) {
    if (r.top1) {
      out[base + 0] = *r.top1;
      out[base + 2] = out[base + 2] ? std::max(*out[base + 2], double(*r.top1)) : double(*r.top1);
    }
    if (r.top5) {
      out[base + 1] = *r.top5;
      out[base + 3] = out[base + 3] ? std::max(*out[base + 3], double(*r.top5)) : double(*r.top5);
    }
  };
  for (const auto& r : records) {
    if (r.model_id == "source") update(0, r);
    if (r.model_id == "target") update(4, r);
  }
  return out;
}

std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& runs) {
  std::vector<ReportRow> groups;
  std::vector<std::vector<const ReportRow*>> members;
  for (const auto& r : runs) {
    if (r.kind != "run") continue;
    std::size_t g = 0;
    while (g < groups.size() &&
           !(groups[g].name == r.name && groups[g].config_hash == r.config_hash && groups[g].variant == r.variant)) {
      ++g;
    }
    if (g == groups.size()) {
      ReportRow head;
      head.kind = "aggregate";
      head.name = r.name;
      head.config_hash = r.config_hash;
      head.variant = r.variant;
      groups.push_back(head);
      members.emplace_back();
    }
    members[g].push_back(&r);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ReportRow& row = groups[g];
    std::vector<const ReportRow*> ok;
    for (const auto* m : members[g]) {
      if (m->status == "ok") ok.push_back(m);
      row.wall_time_s += m->wall_time_s;
    }
    row.n = ok.size();
    row.failed = members[g].size() - ok.size();
    row.status = row.failed == 0 ? "ok" : (ok.empty() ? "failed" : "partial");
    for (std::size_t k = 0; k < kReportMetrics.size(); ++k) {
      std::vector<double> xs;
      for (const auto* m : ok) {
        if (m->mean[k]) xs.push_back(*m->mean[k]);
      }
      if (xs.empty()) continue;
      double s = 0;
      for (double x : xs) s += x;
      const double mu = s / double(xs.size());
      row.mean[k] = mu;
      if (xs.size() >= 2) {
        double ss = 0;
        for (double x : xs) ss += (x - mu) * (x - mu);
        row.stddev[k] = std::sqrt(ss / double(xs.size() - 1));
      }
    }
  }
  return groups;
}

std::string report_header() {
  std::string h = "kind,name,config_hash,variant,seed,status,n,failed";
  for (const char* m : kReportMetrics) h += std::string(",") + m + "," + m + "_std";
  return h;
}

std::string format_report_row(const ReportRow& r) {
  std::string s = r.kind + "," + r.name + "," + r.config_hash + "," + r.variant + "," +
                  (r.seed ? std::to_string(*r.seed) : std::string()) + "," + r.status + "," + std::to_string(r.n) + "," +
                  std::to_string(r.failed);
  for (std::size_t k = 0; k < kReportMetrics.size(); ++k) {
    s += "," + format_optional(r.mean[k]) + "," + format_optional(r.stddev[k]);
  }
  return s;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out = report_header() + "\n";
  for (const auto& r : rows) out += format_report_row(r) + "\n";
  return out;
}

std::vector<ReportRow> parse_report(const std::string& csv) {
  const auto lines = split_lines(csv);
  if (lines.empty() || lines[0] != report_header()) throw FormatError("report line 1: unexpected header");
  const std::size_t width = 8 + 2 * kReportMetrics.size();
  std::vector<ReportRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "report line " + std::to_string(i + 1) + ": ";
    const auto f = split_csv_line(lines[i]);
    if (f.size() != width) throw FormatError(where + "expected " + std::to_string(width) + " fields");
    ReportRow r;
    r.kind = f[0];
    if (r.kind != "run" && r.kind != "aggregate") throw FormatError(where + "bad kind \"" + f[0] + "\"");
    r.name = f[1];
    r.config_hash = f[2];
    r.variant = f[3];
    if (!f[4].empty()) {
      try {
        std::size_t used = 0;
        r.seed = std::stoull(f[4], &used);
        if (used != f[4].size()) throw std::invalid_argument("seed");
      } catch (const std::exception&) {
        throw FormatError(where + "bad seed \"" + f[4] + "\"");
      }
    }
    r.status = f[5];
    const auto n = parse_number(f[6]);
    const auto failed = parse_number(f[7]);
    if (!n || !failed) throw FormatError(where + "bad n/failed");
    r.n = static_cast<std::size_t>(*n);
    r.failed = static_cast<std::size_t>(*failed);
    for (std::size_t k = 0; k < kReportMetrics.size(); ++k) {
      for (std::size_t j = 0; j < 2; ++j) {
        const std::string& field = f[8 + 2 * k + j];
        if (field.empty()) continue;
        const auto v = parse_number(field);
        if (!v) throw FormatError(where + "bad value \"" + field + "\" for " + kReportMetrics[k]);
        (j == 0 ? r.mean : r.stddev)[k] = *v;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_timing(const std::vector<ReportRow>& runs) {
  std::string out = "name,variant,seed,wall_time_s\n";
  for (const auto& r : runs) {
    if (r.kind != "run") continue;
    out += r.name + "," + r.variant + "," + (r.seed ? std::to_string(*r.seed) : std::string()) + "," +
           format_number(r.wall_time_s) + "\n";
  }
  return out;
}

std::string emit_curves(const std::vector<CurveSource>& sources) {
  std::string out = "variant,run,step,metric,value\n";
  static const char* kOmega[4] = {"omega_1", "omega_2", "omega_3", "omega_4"};
  for (const auto& src : sources) {
    const std::string prefix = src.variant + "," + src.run + ",";
    for (const auto& r : src.records) {
      const std::string row = prefix + std::to_string(r.step) + "," + r.model_id + "/";
      out += row + "loss," + format_number(r.loss) + "\n";
      if (r.top1) out += row + "top1," + format_number(*r.top1) + "\n";
      if (r.top5) out += row + "top5," + format_number(*r.top5) + "\n";
      for (std::size_t k = 0; k < 4; ++k) {
        if (r.omega[k]) out += row + kOmega[k] + "," + format_number(*r.omega[k]) + "\n";
      }
    }
  }
  return out;
}

std::vector<fs::path> find_run_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
  if (fs::exists(root / "records.csv")) out.push_back(root);
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "records.csv")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

ReportRow read_run_row(const fs::path& dir) {
  const auto rows = parse_report(read_file(dir / "report_row.csv"));
  if (rows.size() != 1 || rows[0].kind != "run") throw FormatError(dir.string() + "/report_row.csv: expected one run row");
  return rows[0];
}

}  // namespace

std::vector<ReportRow> collect_report(const fs::path& root) {
  std::vector<ReportRow> rows;
  for (const auto& dir : find_run_dirs(root)) rows.push_back(read_run_row(dir));
  const auto agg = aggregate_rows(rows);
  rows.insert(rows.end(), agg.begin(), agg.end());
  return rows;
}

std::string collect_curves(const fs::path& root) {
  std::vector<CurveSource> sources;
  for (const auto& dir : find_run_dirs(root)) {
    CurveSource src;
    src.variant = read_run_row(dir).variant;
    src.run = fs::relative(dir, root).generic_string();
    if (src.run.empty()) src.run = ".";
    const fs::path records = dir / "records.csv";
    try {
      src.records = parse_run_records(read_file(records));
    } catch (const FormatError& e) {
      throw FormatError(records.string() + ": " + e.what());
    }
    sources.push_back(std::move(src));
  }
  return emit_curves(sources);
}

}  // namespace mergenet
