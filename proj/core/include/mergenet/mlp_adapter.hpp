#ifndef MERGENET_MLP_ADAPTER_HPP
#define MERGENET_MLP_ADAPTER_HPP

#include <cstddef>
#include <vector>

#include "mergenet/rng.hpp"
#include "mergenet/tensor.hpp"

namespace mergenet {

/// Source dense weight N x M mapped to target dense weight n x m.
struct MlpDims {
  std::size_t source_rows = 0;  // N
  std::size_t source_cols = 0;  // M
  std::size_t target_rows = 0;  // n
  std::size_t target_cols = 0;  // m

  bool operator==(const MlpDims&) const = default;
};

/*
 * Baseline parameter adapter: two affine maps acting on different axes.
 * xi1 maps every source row (length M) to length n, the N x n result is
 * transposed, and xi2 maps every row (length N) to length m:
 *
 *   out = xi2((xi1(W))^T),   xi(X) = X * weight + bias (bias added per row)
 *
 * The target's current weight is never read.
 */
class MlpAdapter {
 public:
  MlpAdapter(const MlpDims& dims, Rng& rng);

  const MlpDims& dims() const { return dims_; }

  Tensor xi1_weight;  // M x n
  Tensor xi1_bias;    // 1 x n
  Tensor xi2_weight;  // N x m
  Tensor xi2_bias;    // 1 x m

  std::vector<Tensor> parameters() const { return {xi1_weight, xi1_bias, xi2_weight, xi2_bias}; }
  std::size_t parameter_count() const;
  MlpAdapter clone() const;

 private:
  MlpDims dims_;
};

Tensor mlp_forward(const MlpAdapter& adapter, const Tensor& w_source);

}  // namespace mergenet

#endif  // MERGENET_MLP_ADAPTER_HPP
