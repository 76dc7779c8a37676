#include "mergenet/baselines.hpp"

#include <algorithm>

#include "mergenet/errors.hpp"

namespace mergenet {

void copy_overlap(const Tensor& src, Tensor& dst) {
  if (!src.is_matrix() || !dst.is_matrix()) throw ShapeError("copy_overlap: operands must be 2-D");
  const auto rows = std::min(src.rows(), dst.rows());
  const auto cols = std::min(src.cols(), dst.cols());
  if (rows == 0 || cols == 0) throw ContractError("copy_overlap: empty overlap");
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst.at(i, j) = src.at(i, j);
}

void copy_share_baseline(const ZooModel& source, ZooModel& target, const SlotMap& slots) {
  for (const auto& [from, to] : slots) {
    if (!source.has_slot(from)) throw ContractError("copy_share: source has no slot '" + from + "'");
    if (!target.has_slot(to)) throw ContractError("copy_share: target has no slot '" + to + "'");
    if (target.is_factorized(to)) {
      if (!source.is_factorized(from)) {
        throw ContractError("copy_share: factorized target '" + to + "' needs a factorized source");
      }
      auto& dst = target.factors(to);
      const auto& src = source.factors(from);
      copy_overlap(src.b, dst.b);
      copy_overlap(src.a, dst.a);
    } else {
      auto& dst = std::get<Tensor>(target.layer(to).weight);
      copy_overlap(source.weight_matrix(from), dst);
    }
  }
}

}  // namespace mergenet
