#include "mergenet/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "mergenet/checkpoint.hpp"
#include "mergenet/data.hpp"
#include "mergenet/errors.hpp"
#include "mergenet/rng.hpp"

namespace mergenet {

namespace fs = std::filesystem;

fs::path output_root() {
  const char* env = std::getenv("MERGENET_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

fs::path run_directory(const ExperimentConfig& cfg, const fs::path& root) {
  if (!cfg.output_dir.empty()) return root / cfg.output_dir;
  std::string variant = cfg.variant;
  for (char& c : variant) {
    if (c == '/' || c == ' ' || c == '\\') c = '_';
  }
  return root / cfg.name / variant / ("seed-" + std::to_string(cfg.seed));
}

namespace {

struct Split {
  std::shared_ptr<Dataset> train;
  std::shared_ptr<Dataset> test;
  Standardizer norm;
};

Split load_split(const DatasetConfig& d, std::uint64_t sample_seed) {
  Split s;
  if (d.kind == DatasetKind::synthetic) {
    SyntheticTask task;
    task.classes = d.classes;
    task.input_dim = d.input_dim;
    task.components_per_class = d.components_per_class;
    task.separation = d.separation;
    task.noise = d.noise;
    task.signal_dim = d.signal_dim;
    task.train_size = d.train_size;
    task.test_size = d.test_size;
    task.task_seed = d.task_seed;
    task.sample_seed = sample_seed;
    auto [train, test] = gen_synthetic(task);
    s.train = std::make_shared<Dataset>(std::move(train));
    s.test = std::make_shared<Dataset>(std::move(test));
  } else {
    const CifarVariant v = d.kind == DatasetKind::cifar10 ? CifarVariant::cifar10 : CifarVariant::cifar100;
    s.train = std::make_shared<Dataset>(load_cifar_binary(d.train_path, v, d.train_limit));
    s.test = std::make_shared<Dataset>(load_cifar_binary(d.test_path, v, d.test_limit));
  }
  if (d.standardize) {
    s.norm = Standardizer::fit(*s.train);
    s.norm.apply(*s.train);
    s.norm.apply(*s.test);
  }
  return s;
}

std::uint64_t tag(const char* s) { return fnv1a64(std::string_view(s)); }

void add_unique(std::vector<std::string>& v, const std::string& s) {
  for (const auto& x : v) {
    if (x == s) return;
  }
  v.push_back(s);
}

ModelSpec model_spec(const ModelConfig& m, const ExperimentConfig& cfg, std::vector<std::string> slots, const char* role) {
  ModelSpec spec;
  spec.kind = m.kind;
  spec.classes = m.dataset.classes;
  spec.input_dim = m.dataset.input_dim;
  if (m.input_shape) spec.image = *m.input_shape;
  spec.rank = cfg.adapter.r;
  spec.transfer_slots = std::move(slots);
  spec.seed = Rng::derive(cfg.seed, tag(role)).next_u64();
  return spec;
}

void pretrain(ZooModel& model, const Split& data, const ModelConfig& m, std::uint64_t seed) {
  if (m.pretrain_steps == 0) return;
  BatchStream stream(data.train, m.batch_size, seed);
  for (std::size_t t = 0; t < m.pretrain_steps; ++t) self_learning_step(model, stream.next(), Scalar(m.lr));
}

nlohmann::json norm_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.begin(), s.mean.end())},
          {"stddev", std::vector<double>(s.stddev.begin(), s.stddev.end())}};
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& root, bool write_files) {
  validate_config(cfg);
  const auto started = std::chrono::steady_clock::now();
  RunOutcome out;
  out.dir = run_directory(cfg, root);
  out.row.kind = "run";
  out.row.name = cfg.name;
  out.row.config_hash = config_hash(cfg);
  out.row.variant = cfg.variant;
  out.row.seed = cfg.seed;

  const AdapterKind kind = cfg.adapter.kind;
  const bool factorize = is_lpka(kind);
  const bool uses_pairs = kind != AdapterKind::none && kind != AdapterKind::kd;
  const std::vector<SlotPair> pairs = uses_pairs ? cfg.plan.pairs : std::vector<SlotPair>{};

  // Data. Models sharing a task differ only in their sample streams.
  Split target_data = load_split(cfg.target.dataset, Rng::derive(cfg.seed, tag("data/target")).next_u64());
  std::optional<Split> source_data;
  if (cfg.source) source_data = load_split(cfg.source->dataset, Rng::derive(cfg.seed, tag("data/source")).next_u64());

  // Models.
  std::vector<std::string> target_slots, source_slots;
  if (factorize) {
    for (const auto& p : pairs) {
      add_unique(target_slots, p.target_slot);
      add_unique(cfg.self_transfer() ? target_slots : source_slots, p.source_slot);
    }
  }
  ZooModel target = build_model(model_spec(cfg.target, cfg, target_slots, "model/target"));
  std::optional<ZooModel> source;
  if (cfg.source) {
    const bool late_factorize = cfg.plan.frozen_source && factorize;
    source = build_model(model_spec(*cfg.source, cfg, late_factorize ? std::vector<std::string>{} : source_slots,
                                    "model/source"));
    pretrain(*source, *source_data, *cfg.source, Rng::derive(cfg.seed, tag("pretrain/source")).next_u64());
    if (late_factorize) {
      for (const auto& s : source_slots) source->factorize_slot(s, cfg.adapter.r);
    }
  }
  pretrain(target, target_data, cfg.target, Rng::derive(cfg.seed, tag("pretrain/target")).next_u64());
  ZooModel* source_ptr = cfg.source ? &*source : &target;

  BatchStream target_stream(target_data.train, cfg.target.batch_size, Rng::derive(cfg.seed, tag("stream/target")).next_u64());
  std::optional<BatchStream> source_stream;
  if (cfg.source) {
    source_stream.emplace(source_data->train, cfg.source->batch_size,
                          Rng::derive(cfg.seed, tag("stream/source")).next_u64());
  }

  TransferPlan plan;
  plan.pairs = pairs;
  plan.directions = cfg.plan.directions;
  plan.t_cycle = cfg.plan.t_cycle;
  plan.source_ratio = cfg.source ? cfg.source->freq_ratio : cfg.target.freq_ratio;
  plan.target_ratio = cfg.target.freq_ratio;
  plan.frozen_source = cfg.plan.frozen_source;
  plan.literal_t0 = cfg.plan.literal_t0;
  plan.eta_adapter = Scalar(cfg.adapter.lr);
  plan.eta_source = Scalar(cfg.source ? cfg.source->lr : cfg.target.lr);
  plan.eta_target = Scalar(cfg.target.lr);
  try {
    plan.validate();
  } catch (const PlanError& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }

  std::vector<PairAdapter> adapters;
  {
    Rng rng = Rng::derive(cfg.seed, tag("adapter"));
    AdapterOptions opts;
    opts.rank = cfg.adapter.r;
    opts.attn_dim = cfg.adapter.d;
    opts.layers = cfg.adapter.layers;
    opts.omega_trainable = cfg.adapter.omega_trainable;
    opts.residual = cfg.adapter.residual;
    try {
      for (const auto& p : pairs) adapters.push_back(PairAdapter::make(kind, p, *source_ptr, target, opts, plan.directions, rng));
    } catch (const ContractError& e) {
      throw ConfigError(std::string("plan.pairs: ") + e.what());
    }
  }

  const std::string source_initial = cfg.source ? checkpoint_bytes(source->checkpoint_entries()) : std::string();

  TrainingOptions topts;
  topts.total_steps = cfg.total_steps;
  topts.eval_every = cfg.eval_every;
  topts.kind = kind;
  topts.kd_temperature = Scalar(cfg.adapter.kd_temperature);
  topts.kd_alpha = Scalar(cfg.adapter.kd_alpha);

  TrainedModel tm{"target", &target, &target_stream, target_data.test.get(), Scalar(cfg.target.lr)};
  TrainedModel sm = tm;
  if (cfg.source) {
    sm = TrainedModel{"source", &*source, plan.frozen_source ? nullptr : &*source_stream, source_data->test.get(),
                      Scalar(cfg.source->lr)};
  }

  const bool vanilla = kind == AdapterKind::none && !plan.frozen_source;
  try {
    if (vanilla) {
      std::vector<TrainedModel> models;
      if (cfg.source) models.push_back(sm);
      models.push_back(tm);
      out.records = train_vanilla(models, topts);
    } else {
      auto observer = [&](std::size_t, const std::vector<RunRecord>& rows) {
        out.records.insert(out.records.end(), rows.begin(), rows.end());
      };
      run_training(plan, sm, tm, adapters, topts, observer);
    }
  } catch (const NonFiniteError& e) {
    out.row.status = "failed";
    out.error = e.what();
  }

  InferenceBundle bundle = cfg.source ? strip_adapter({{"source", &*source}, {"target", &target}})
                                      : strip_adapter({{"target", &target}});
  out.row.mean = summarize_records(out.records);
  out.row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (write_files) {
    fs::create_directories(out.dir / "checkpoints");
    write_file_atomic(out.dir / "resolved_config.json", emit_config(cfg));
    write_file_atomic(out.dir / "records.csv", format_run_records(out.records));
    write_file_atomic(out.dir / "report_row.csv", format_report({out.row}));
    write_file_atomic(out.dir / "timing.csv", format_timing({out.row}));
    nlohmann::json norm;
    norm["target"] = norm_json(target_data.norm);
    if (source_data) norm["source"] = norm_json(source_data->norm);
    write_file_atomic(out.dir / "normalization.json", norm.dump(2) + "\n");
    if (cfg.source) {
      write_file_atomic(out.dir / "checkpoints" / "source_initial.ckpt", source_initial);
      save_checkpoint(out.dir / "checkpoints" / "source_final.ckpt", source->checkpoint_entries());
    }
    save_checkpoint(out.dir / "checkpoints" / "final.ckpt", bundle.checkpoint_entries());
    std::vector<CheckpointEntry> adapter_entries;
    for (std::size_t i = 0; i < adapters.size(); ++i) {
      for (auto& e : adapters[i].checkpoint_entries()) {
        e.slot_id = "pair" + std::to_string(i) + "/" + e.slot_id;
        adapter_entries.push_back(std::move(e));
      }
    }
    save_checkpoint(out.dir / "checkpoints" / "adapter.ckpt", adapter_entries);
    if (!out.error.empty()) write_file_atomic(out.dir / "error.txt", out.error + "\n");
  }
  return out;
}

SweepResult sweep(const std::vector<ExperimentConfig>& configs, const std::vector<std::uint64_t>& seeds,
                  const fs::path& root, std::size_t jobs, bool write_files) {
  if (configs.empty()) throw ConfigError("sweep: at least one config is required");
  std::vector<ExperimentConfig> work;
  for (const auto& c : configs) {
    if (seeds.empty()) {
      work.push_back(c);
      continue;
    }
    for (auto s : seeds) {
      ExperimentConfig run = c;
      run.seed = s;
      work.push_back(run);
    }
  }
  std::set<fs::path> dirs;
  for (const auto& c : work) {
    validate_config(c);
    if (!dirs.insert(run_directory(c, root)).second) {
      throw ConfigError("sweep: two runs share the directory " + run_directory(c, root).string() +
                        "; give them distinct name, variant or seed");
    }
  }

  SweepResult result;
  result.runs.resize(work.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      try {
        result.runs[i] = run_experiment(work[i], root, write_files);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = work.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, work.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ReportRow> rows;
  for (const auto& r : result.runs) {
    rows.push_back(r.row);
    if (r.row.status != "ok") result.any_failed = true;
  }
  const auto agg = aggregate_rows(rows);
  result.table = rows;
  result.table.insert(result.table.end(), agg.begin(), agg.end());

  if (write_files) {
    fs::create_directories(root);
    write_file_atomic(root / "report.csv", format_report(result.table));
    write_file_atomic(root / "timing.csv", format_timing(rows));
    std::vector<CurveSource> curves;
    for (const auto& r : result.runs) {
      curves.push_back({r.row.variant, fs::relative(r.dir, root).generic_string(), r.records});
    }
    write_file_atomic(root / "curves.csv", emit_curves(curves));
  }
  return result;
}

}  // namespace mergenet
