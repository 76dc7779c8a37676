#ifndef MERGENET_CONFIG_HPP
#define MERGENET_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mergenet/transfer.hpp"
#include "mergenet/zoo.hpp"

namespace mergenet {

enum class DatasetKind { synthetic, cifar10, cifar100 };
const char* dataset_kind_name(DatasetKind k);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  // synthetic
  std::size_t classes = 10;
  std::size_t input_dim = 32;
  std::size_t components_per_class = 1;
  double separation = 1.0;
  double noise = 1.0;
  std::size_t signal_dim = 0;
  std::size_t train_size = 1000;
  std::size_t test_size = 1000;
  /// Class means; models sharing a task_seed share the task.
  std::uint64_t task_seed = 1;
  // cifar
  std::string train_path;
  std::string test_path;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  bool standardize = true;

  bool operator==(const DatasetConfig&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::mlp_small;
  double lr = 0.05;
  std::size_t batch_size = 32;
  std::size_t freq_ratio = 1;
  std::size_t pretrain_steps = 0;
  /// channels, height, width; required for CNN kinds on synthetic data.
  std::optional<ImageShape> input_shape;
  DatasetConfig dataset;

  bool operator==(const ModelConfig&) const = default;
};

struct PlanConfig {
  std::vector<SlotPair> pairs;
  std::size_t t_cycle = 4;
  Direction directions = Direction::both;
  bool frozen_source = false;
  bool literal_t0 = false;

  bool operator==(const PlanConfig&) const = default;
};

struct AdapterConfig {
  AdapterKind kind = AdapterKind::lpka_full;
  std::size_t r = 8;
  std::size_t d = 16;
  std::size_t layers = 1;
  bool omega_trainable = true;
  bool residual = false;
  double lr = 0.05;
  double kd_temperature = 4.0;
  double kd_alpha = 0.9;

  bool operator==(const AdapterConfig&) const = default;
};

/*
 * One experiment. Without a source model the run is a self-transfer: the
 * plan's pairs map slots of the target model onto itself.
 */
struct ExperimentConfig {
  std::string name = "experiment";
  /// Label used to group rows in reports; defaults to the adapter kind.
  std::string variant;
  std::uint64_t seed = 1;
  std::size_t total_steps = 200;
  std::size_t eval_every = 0;
  std::string output_dir;
  std::optional<ModelConfig> source;
  ModelConfig target;
  PlanConfig plan;
  AdapterConfig adapter;

  bool self_transfer() const { return !source.has_value(); }
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates a JSON experiment; throws ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
/// Resolved config as pretty JSON, every default spelled out.
std::string emit_config(const ExperimentConfig& cfg);
/// Runs the invariant checks parse_config applies.
void validate_config(const ExperimentConfig& cfg);

/// Either {"experiments": [...]} or a single experiment object.
std::vector<ExperimentConfig> parse_suite(const std::string& text);

/// FNV-1a over the canonical config with seed and output_dir removed.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace mergenet

#endif  // MERGENET_CONFIG_HPP
