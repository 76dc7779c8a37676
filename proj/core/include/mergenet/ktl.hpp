#ifndef MERGENET_KTL_HPP
#define MERGENET_KTL_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mergenet/checkpoint.hpp"
#include "mergenet/lpka.hpp"

namespace mergenet {

/// l2s: source ("large") feeds target ("small"); s2l the reverse.
enum class Direction { l2s, s2l, both };
const char* direction_name(Direction d);
Direction parse_direction(const std::string& s);
bool includes(Direction set, Direction single);

struct KtlDims {
  std::size_t rank = 0;
  std::size_t large_cols = 0;  // M, columns of the source factor
  std::size_t small_cols = 0;  // m, columns of the target factor
  std::size_t attn_dim = 16;
};

/// One knowledge-transfer layer: an independent adapter per direction.
struct KtlLayer {
  std::optional<LpkaAdapter> to_small;  // generates r x m from (a_s query, a_l source)
  std::optional<LpkaAdapter> to_large;  // generates r x M from (a_l query, a_s source)
};

class KtlStack {
 public:
  KtlStack(std::size_t depth, const KtlDims& dims, LpkaVariant variant, Direction available, Rng& rng,
           bool residual = false);

  std::size_t depth() const { return layers_.size(); }
  const KtlDims& dims() const { return dims_; }
  LpkaVariant variant() const { return variant_; }
  Direction available() const { return available_; }
  std::vector<KtlLayer>& layers() { return layers_; }
  const std::vector<KtlLayer>& layers() const { return layers_; }

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void set_omega_trainable(bool on);
  KtlStack clone() const;

  /// Manifest entries named adapter/<layer>.<direction>/<combo>/<role>.
  std::vector<CheckpointEntry> checkpoint_entries() const;

 private:
  KtlDims dims_;
  LpkaVariant variant_;
  Direction available_;
  std::vector<KtlLayer> layers_;
};

/*
 * Runs the stack. Within a layer both outputs are computed from that layer's
 * inputs; a direction that was not requested passes its factor through.
 * Returns (a_l, a_s) after the last layer.
 */
std::pair<Tensor, Tensor> ktl_apply(const KtlStack& stack, const Tensor& a_l, const Tensor& a_s, Direction directions);

}  // namespace mergenet

#endif  // MERGENET_KTL_HPP
