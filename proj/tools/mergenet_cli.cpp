#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mergenet/checkpoint.hpp"
#include "mergenet/config.hpp"
#include "mergenet/errors.hpp"
#include "mergenet/experiment.hpp"
#include "mergenet/presets.hpp"
#include "mergenet/report.hpp"

namespace fs = std::filesystem;
using namespace mergenet;

namespace {

constexpr int kOk = 0;
constexpr int kRunFailed = 1;
constexpr int kConfigError = 2;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: expected comma-separated non-negative integers, got \"" + item + "\"");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: at least one seed is required");
  return out;
}

void print_table(const std::vector<ReportRow>& rows) {
  std::printf("%-10s %-20s %-16s %6s %7s %3s  %-14s %-14s\n", "kind", "name", "variant", "seed", "status", "n",
              "target_top1", "source_top1");
  auto cell = [](const ReportRow& r, std::size_t k) {
    char buf[40];
    if (!r.mean[k]) return std::string("-");
    if (r.stddev[k]) {
      std::snprintf(buf, sizeof buf, "%.4f+-%.4f", *r.mean[k], *r.stddev[k]);
    } else {
      std::snprintf(buf, sizeof buf, "%.4f", *r.mean[k]);
    }
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::printf("%-10s %-20s %-16s %6s %7s %3zu  %-14s %-14s\n", r.kind.c_str(), r.name.c_str(), r.variant.c_str(),
                r.seed ? std::to_string(*r.seed).c_str() : "", r.status.c_str(), r.n, cell(r, 4).c_str(),
                cell(r, 0).c_str());
  }
}

int finish_sweep(const SweepResult& res, const fs::path& root) {
  print_table(res.table);
  std::printf("wrote %s\n", (root / "report.csv").string().c_str());
  for (const auto& r : res.runs) {
    if (!r.error.empty()) std::fprintf(stderr, "run %s failed: %s\n", r.dir.string().c_str(), r.error.c_str());
  }
  return res.any_failed ? kRunFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mergenet: low-rank parameter transfer between heterogeneous models"};
  app.require_subcommand(1);

  std::string config_path, dir, preset_name, seeds_text;
  std::size_t jobs = 1;

  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config_path, "JSON experiment config")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "Run configs x seeds and aggregate");
  sweep_cmd->add_option("config", config_path, "JSON experiment or {\"experiments\": [...]} suite")->required();
  sweep_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds, e.g. 1,2,3");
  sweep_cmd->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Aggregate the runs below a directory");
  report->add_option("dir", dir, "Run directory root")->required();

  auto* curves = app.add_subcommand("curves", "Emit long-format curves for the runs below a directory");
  curves->add_option("dir", dir, "Run directory root")->required();

  auto* preset = app.add_subcommand("preset", "Run a built-in protocol suite");
  preset->add_option("name", preset_name, "Preset name")->required();
  preset->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  app.add_subcommand("presets", "List built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  const fs::path root = output_root();
  try {
    if (*run) {
      const ExperimentConfig cfg = parse_config(read_file(config_path));
      const RunOutcome out = run_experiment(cfg, root);
      print_table({out.row});
      std::printf("wrote %s\n", out.dir.string().c_str());
      if (!out.error.empty()) {
        std::fprintf(stderr, "run failed: %s\n", out.error.c_str());
        return kRunFailed;
      }
      return kOk;
    }
    if (*sweep_cmd) {
      const auto configs = parse_suite(read_file(config_path));
      const auto seeds = seeds_text.empty() ? std::vector<std::uint64_t>{} : parse_seeds(seeds_text);
      return finish_sweep(sweep(configs, seeds, root, jobs), root);
    }
    if (*preset) {
      const Suite suite = make_preset(preset_name);
      const fs::path preset_root = root / suite.name;
      return finish_sweep(sweep(suite.configs, suite.seeds, preset_root, jobs), preset_root);
    }
    if (*report) {
      const auto rows = collect_report(dir);
      write_file_atomic(fs::path(dir) / "report.csv", format_report(rows));
      print_table(rows);
      for (const auto& r : rows) {
        if (r.status != "ok") return kRunFailed;
      }
      return kOk;
    }
    if (*curves) {
      std::cout << collect_curves(dir);
      return kOk;
    }
    for (const auto& n : preset_names()) std::printf("%s\n", n.c_str());
    return kOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRunFailed;
  }
}
