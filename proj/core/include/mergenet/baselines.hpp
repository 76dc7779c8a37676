#ifndef MERGENET_BASELINES_HPP
#define MERGENET_BASELINES_HPP

#include <string>
#include <utility>
#include <vector>

#include "mergenet/zoo.hpp"

namespace mergenet {

/// Copies src[0:min rows, 0:min cols] into the same region of dst.
void copy_overlap(const Tensor& src, Tensor& dst);

/// (source slot, target slot)
using SlotMap = std::vector<std::pair<std::string, std::string>>;

/*
 * Direct parameter sharing: overwrite the overlapping top-left region of each
 * mapped target slot with the source slot. Factorized slots share factor by
 * factor (b then a); a dense target receives the densified source.
 */
void copy_share_baseline(const ZooModel& source, ZooModel& target, const SlotMap& slots);

}  // namespace mergenet

#endif  // MERGENET_BASELINES_HPP
