#ifndef MERGENET_PRESETS_HPP
#define MERGENET_PRESETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mergenet/config.hpp"

namespace mergenet {

struct Suite {
  std::string name;
  std::vector<ExperimentConfig> configs;
  std::vector<std::uint64_t> seeds;
};

/*
 *   smoke_transfer    mlp_large (10k samples) -> mlp_small (1k), head->head,
 *                     vanilla vs lpka_full, 5 seeds
 *   baselines         the same task: vanilla, kd, copy_share, mlp, lpka_full
 *   cross_structure   cnn_large head <-> cnn_small conv2 kernel
 *   self_transfer     one mlp_small, head -> fc2
 *   frozen_source     pretrained mlp_large frozen, l2s only
 *   cross_layer       mlp_large fc3 -> mlp_small fc2
 *   tcycle_sweep      t_cycle in {1, 2, 4, 8, 16}
 *   ablation_table7   mlp, lpka_row_only, lpka_avg, lpka_full
 */
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
Suite make_preset(const std::string& name);

}  // namespace mergenet

#endif  // MERGENET_PRESETS_HPP
