#ifndef MERGENET_PARAM_CODEC_HPP
#define MERGENET_PARAM_CODEC_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mergenet/tensor.hpp"

namespace mergenet {

/// A weight stored as the product b * a, with b: rows x r and a: r x cols.
struct LowRankParam {
  Tensor b;
  Tensor a;
  std::string slot_id;

  LowRankParam() = default;
  LowRankParam(Tensor b_factor, Tensor a_factor, std::string id);

  std::size_t rows() const { return b.rows(); }
  std::size_t cols() const { return a.cols(); }
  std::size_t rank() const { return a.rows(); }

  LowRankParam clone() const;
};

/// Which parameters of a model take part in transfer and which stay local.
struct ParamPartition {
  std::vector<std::string> transfer_slots;
  std::vector<std::string> frozen_or_local;

  /// Throws ContractError if the two sets overlap or do not cover `all`.
  void validate(const std::vector<std::string>& all) const;
};

/// b * a, differentiable through both factors.
Tensor densify(const LowRankParam& p);

struct SvdOptions {
  std::size_t iters = 50;
  std::uint64_t seed = 0x5eed;
  /// Stop once the Frobenius change of the projected basis falls below this.
  Scalar tol = Scalar(1e-10);
};

struct Reencoded {
  LowRankParam param;
  std::vector<Scalar> singular_values;
  std::size_t iterations = 0;
  /// False when the basis was still rotating after `iters` sweeps; the
  /// factors are then the best found so far.
  bool converged = false;
};

/*
 * Rank-r re-encoding of a dense matrix by orthogonal (subspace) iteration on
 * w * w^T with QR re-orthonormalisation after every sweep, followed by a
 * Rayleigh-Ritz step to split the subspace into singular directions.
 * Singular values are absorbed into b (b = U_r S_r, a = V_r^T).
 */
Reencoded reencode_truncated_svd(const Tensor& w, std::size_t r, const SvdOptions& opts = {},
                                 const std::string& slot_id = {});

/// out x in x kh x kw -> out x (in*kh*kw); row i is filter i flattened.
Tensor reshape_conv_kernel(const Tensor& kernel);
/// Inverse of reshape_conv_kernel.
Tensor unreshape_conv_kernel(const Tensor& matrix, std::size_t in_channels, std::size_t kh, std::size_t kw);

}  // namespace mergenet

#endif  // MERGENET_PARAM_CODEC_HPP
