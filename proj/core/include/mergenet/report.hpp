#ifndef MERGENET_REPORT_HPP
#define MERGENET_REPORT_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mergenet/transfer.hpp"

namespace mergenet {

inline constexpr std::array<const char*, 8> kReportMetrics = {
    "source_final_top1", "source_final_top5", "source_best_top1", "source_best_top5",
    "target_final_top1", "target_final_top5", "target_best_top1", "target_best_top5"};

/*
 * One line of a report table. kind "run" rows describe a single seed (std
 * columns empty, n = 1); kind "aggregate" rows hold the mean and sample
 * standard deviation over the surviving runs of one (name, config_hash,
 * variant) group. Wall time is kept out of the table so reruns produce
 * identical files; see format_timing.
 */
struct ReportRow {
  std::string kind = "run";
  std::string name;
  std::string config_hash;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string status = "ok";  // ok | failed | partial
  std::size_t n = 1;
  std::size_t failed = 0;
  std::array<std::optional<double>, 8> mean;
  std::array<std::optional<double>, 8> stddev;
  double wall_time_s = 0;

  bool operator==(const ReportRow&) const = default;
};

/// Final and best top-1/top-5 per model id ("source", "target") from records.
std::array<std::optional<double>, 8> summarize_records(const std::vector<RunRecord>& records);

/// Aggregate rows for the run rows, groups in first-appearance order.
std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& runs);

std::string report_header();
std::string format_report_row(const ReportRow& row);
std::string format_report(const std::vector<ReportRow>& rows);
/// Throws FormatError naming the line.
std::vector<ReportRow> parse_report(const std::string& csv);

/// name,variant,seed,wall_time_s
std::string format_timing(const std::vector<ReportRow>& runs);

struct CurveSource {
  std::string variant;
  std::string run;  // run directory, relative to the scanned root
  std::vector<RunRecord> records;
};

/// Long-format variant,run,step,metric,value; metrics are <model>/<column>.
std::string emit_curves(const std::vector<CurveSource>& sources);

/// Every run directory (one holding records.csv) below root, sorted.
std::vector<std::filesystem::path> find_run_dirs(const std::filesystem::path& root);

/// Report table for a directory of runs: their rows plus aggregates.
std::vector<ReportRow> collect_report(const std::filesystem::path& root);
/// Curves for a directory of runs.
std::string collect_curves(const std::filesystem::path& root);

}  // namespace mergenet

#endif  // MERGENET_REPORT_HPP
