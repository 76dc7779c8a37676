#ifndef MERGENET_EXPERIMENT_HPP
#define MERGENET_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mergenet/config.hpp"
#include "mergenet/report.hpp"

namespace mergenet {

/// $MERGENET_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path output_root();

/// <root>/<output_dir> when set, else <root>/<name>/<variant>/seed-<seed>.
std::filesystem::path run_directory(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct RunOutcome {
  ReportRow row;
  std::vector<RunRecord> records;
  std::filesystem::path dir;
  std::string error;  // set when row.status == "failed"
};

/*
 * Runs one experiment and writes its directory:
 *
 *   resolved_config.json    the config with every default filled in
 *   records.csv             one RunRecord per model per step
 *   report_row.csv          the run's ReportRow
 *   timing.csv              wall time
 *   normalization.json      per-model feature mean / stddev
 *   checkpoints/source_initial.ckpt, source_final.ckpt (two-model runs)
 *   checkpoints/final.ckpt  the inference bundle, adapter removed
 *   checkpoints/adapter.ckpt
 *
 * A non-finite loss marks the row failed; records up to that step are kept.
 * Config problems surface as ConfigError before anything is written.
 */
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& root, bool write_files = true);

struct SweepResult {
  std::vector<RunOutcome> runs;
  std::vector<ReportRow> table;  // run rows in (config, seed) order, then aggregates
  bool any_failed = false;
};

/*
 * configs x seeds (each config's own seed when `seeds` is empty), run on up
 * to `jobs` threads. Writes report.csv, timing.csv and curves.csv into
 * `root` when write_files is set.
 */
SweepResult sweep(const std::vector<ExperimentConfig>& configs, const std::vector<std::uint64_t>& seeds,
                  const std::filesystem::path& root, std::size_t jobs = 1, bool write_files = true);

}  // namespace mergenet

#endif  // MERGENET_EXPERIMENT_HPP
