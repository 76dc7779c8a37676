#ifndef MERGENET_LPKA_HPP
#define MERGENET_LPKA_HPP

#include <array>
#include <cstddef>
#include <vector>

#include "mergenet/rng.hpp"
#include "mergenet/tensor.hpp"

namespace mergenet {

/// Query flattening x key/value flattening. R = row tokens, L = column tokens.
enum class AttnCombo { RR = 0, RL = 1, LR = 2, LL = 3 };
inline constexpr std::array<AttnCombo, 4> kAllCombos = {AttnCombo::RR, AttnCombo::RL, AttnCombo::LR, AttnCombo::LL};
const char* combo_name(AttnCombo c);

enum class LpkaVariant {
  full,      ///< all four combos weighted by learnable omega
  row_only,  ///< RR combo only, scaled by omega_1
  avg_attn,  ///< all four combos averaged with fixed weight 1/4
};
const char* variant_name(LpkaVariant v);

/// Shapes an adapter is bound to: target factor r x m, source factor r x M.
struct LpkaDims {
  std::size_t rank = 0;
  std::size_t target_cols = 0;
  std::size_t source_cols = 0;
  std::size_t attn_dim = 16;

  bool operator==(const LpkaDims&) const = default;
};

/*
 * Projections for one combo. Token lengths follow the flattening:
 *
 *   combo  query tokens   kv tokens     wq         wk, wv      wo
 *   RR     r of len m     r of len M    m x d      M x d       d x m
 *   RL     r of len m     M of len r    m x d      r x d       d x m
 *   LR     m of len r     r of len M    r x d      M x d       d x r
 *   LL     m of len r     M of len r    r x d      r x d       d x r
 *
 * Column-query combos produce m x r and are transposed back to r x m.
 */
struct ComboWeights {
  AttnCombo combo = AttnCombo::RR;
  Tensor wq, wk, wv, wo;
};

/// Softmax matrices captured during a forward pass, one per active combo.
struct LpkaTrace {
  std::vector<AttnCombo> combos;
  std::vector<Tensor> attention;
};

/*
 * Low-rank parametric knowledge adapter: attention from the target's factor
 * tokens (queries) over the source's factor tokens (keys/values), for each of
 * the four row/column flattening combinations, mixed by the omega weights.
 * A row_only adapter owns only the RR projections.
 */
class LpkaAdapter {
 public:
  LpkaAdapter(const LpkaDims& dims, LpkaVariant variant, Rng& rng, bool residual = false);

  const LpkaDims& dims() const { return dims_; }
  LpkaVariant variant() const { return variant_; }
  bool residual() const { return residual_; }
  void set_residual(bool on) { residual_ = on; }

  bool has_combo(AttnCombo c) const;
  ComboWeights& combo(AttnCombo c);
  const ComboWeights& combo(AttnCombo c) const;
  std::vector<ComboWeights>& combos() { return combos_; }
  const std::vector<ComboWeights>& combos() const { return combos_; }

  /// omega_i as single-element tensors, initialised to 0.25.
  std::array<Tensor, 4>& omega() { return omega_; }
  const std::array<Tensor, 4>& omega() const { return omega_; }
  std::array<Scalar, 4> omega_values() const;
  bool omega_trainable() const { return omega_trainable_; }
  void set_omega_trainable(bool on);

  /// Trainable leaves: projections, plus omega when trainable and used.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  LpkaAdapter clone() const;

 private:
  LpkaDims dims_;
  LpkaVariant variant_;
  bool residual_ = false;
  bool omega_trainable_ = true;
  std::vector<ComboWeights> combos_;
  std::array<Tensor, 4> omega_;
};

/// Generates a replacement r x m target factor. Throws ContractError on rank
/// mismatch or when `variant` needs combos the adapter does not own.
Tensor lpka_forward(const LpkaAdapter& adapter, const Tensor& a_target, const Tensor& a_source, LpkaVariant variant,
                    LpkaTrace* trace = nullptr);
inline Tensor lpka_forward(const LpkaAdapter& adapter, const Tensor& a_target, const Tensor& a_source) {
  return lpka_forward(adapter, a_target, a_source, adapter.variant());
}

}  // namespace mergenet

#endif  // MERGENET_LPKA_HPP
