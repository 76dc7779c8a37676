#ifndef MERGENET_OPS_HPP
#define MERGENET_OPS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "mergenet/tensor.hpp"

namespace mergenet {

/// A sequence of equal-length tokens stored one token per row.
using TokenSeq = Tensor;

// Differentiable operations. Every op records itself on the active tape
// when one of its inputs requires a gradient. There is no implicit
// broadcasting: shapes must match exactly except where an op says otherwise.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar c);
/// Multiplies every element of `a` by the single value held in `s`.
Tensor scale_by(const Tensor& s, const Tensor& a);
/// Adds a bias of q values to every row of a p x q matrix.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Inner product of two same-shaped tensors; returns a scalar.
Tensor dot(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);

/// Row tokens of a 2-D matrix: r tokens of length m.
TokenSeq flatten_rows(const Tensor& a);
/// Column tokens of a 2-D matrix: m tokens of length r.
TokenSeq flatten_cols(const Tensor& a);

/// Mean cross-entropy of row-wise logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Convolution support. Feature maps are "channels-last": a batch of N maps of
// H x W pixels with C channels is a (N*H*W) x C matrix.

struct MapGeometry {
  std::size_t batch = 1;
  std::size_t height = 1;
  std::size_t width = 1;
};

/// Converts per-sample channel-major images (N x C*H*W) to channels-last.
Tensor to_channels_last(const Tensor& images, std::size_t channels, const MapGeometry& geom);
/// 3x3-style patch extraction with zero padding `pad`, stride 1. Output
/// columns are ordered (channel, ky, kx), matching a flattened kernel row.
Tensor im2col(const Tensor& x, std::size_t channels, const MapGeometry& geom, std::size_t kh,
              std::size_t kw, std::size_t pad);
/// 2x2 average pooling, stride 2 (height and width must be even).
Tensor avg_pool2(const Tensor& x, const MapGeometry& geom);
/// Averages each map over its pixels: (N*H*W) x C -> N x C.
Tensor global_avg_pool(const Tensor& x, const MapGeometry& geom);

// Plain (non-recorded) helpers.

/// Row-wise argmax-based top-k hit count against labels.
std::size_t topk_hits(const Tensor& logits, std::span<const int> labels, std::size_t k);
bool all_finite(const Tensor& t);
Scalar frobenius(const Tensor& a);
Scalar max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mergenet

#endif  // MERGENET_OPS_HPP
