#include "mergenet/mlp_adapter.hpp"

#include <cmath>

#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"

namespace mergenet {

namespace {

Tensor uniform_param(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-bound, bound));
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

MlpAdapter::MlpAdapter(const MlpDims& dims, Rng& rng) : dims_(dims) {
  if (dims.source_rows == 0 || dims.source_cols == 0 || dims.target_rows == 0 || dims.target_cols == 0) {
    throw ContractError("MLP adapter dimensions must be positive");
  }
  xi1_weight = uniform_param({dims.source_cols, dims.target_rows}, dims.source_cols, rng);
  xi1_bias = uniform_param({1, dims.target_rows}, dims.source_cols, rng);
  xi2_weight = uniform_param({dims.source_rows, dims.target_cols}, dims.source_rows, rng);
  xi2_bias = uniform_param({1, dims.target_cols}, dims.source_rows, rng);
}

std::size_t MlpAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

MlpAdapter MlpAdapter::clone() const {
  MlpAdapter copy = *this;
  copy.xi1_weight = xi1_weight.clone();
  copy.xi1_bias = xi1_bias.clone();
  copy.xi2_weight = xi2_weight.clone();
  copy.xi2_bias = xi2_bias.clone();
  return copy;
}

Tensor mlp_forward(const MlpAdapter& adapter, const Tensor& w_source) {
  const auto& d = adapter.dims();
  if (!w_source.is_matrix() || w_source.rows() != d.source_rows || w_source.cols() != d.source_cols) {
    throw ContractError("mlp_forward: adapter expects source " + std::to_string(d.source_rows) + "x" +
                        std::to_string(d.source_cols) + ", got " + shape_str(w_source.shape()));
  }
  Tensor h = add_row(matmul(w_source, adapter.xi1_weight), adapter.xi1_bias);  // N x n
  return add_row(matmul(transpose(h), adapter.xi2_weight), adapter.xi2_bias);  // n x m
}

}  // namespace mergenet
