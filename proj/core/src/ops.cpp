#include "mergenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mergenet/errors.hpp"

namespace mergenet {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

template <typename F>
void accumulate(const NodePtr& n, F&& f) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  f(n->grad);
}

void require_matrix(const Tensor& a, const char* op) {
  if (!a.is_matrix()) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(a.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
}

// c[p x s] += a[p x q] * b[q x s]
void gemm_nn(const Scalar* a, const Scalar* b, Scalar* c, std::size_t p, std::size_t q, std::size_t s) {
  for (std::size_t i = 0; i < p; ++i) {
    Scalar* ci = c + i * s;
    for (std::size_t k = 0; k < q; ++k) {
      const Scalar aik = a[i * q + k];
      if (aik == Scalar(0)) continue;
      const Scalar* bk = b + k * s;
      for (std::size_t j = 0; j < s; ++j) ci[j] += aik * bk[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto p = a.rows(), q = a.cols(), s = b.cols();
  if (b.rows() != q) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<Scalar> out(p * s, Scalar(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), p, q, s);
  NodePtr an = a.node(), bn = b.node();
  return apply_op("matmul", {p, s}, std::move(out), {a, b}, [an, bn, p, q, s](const TensorNode& o) {
    const auto& g = o.grad;
    accumulate(an, [&](std::vector<Scalar>& ga) {
      // ga += g * b^T
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          Scalar acc = 0;
          const Scalar* gi = g.data() + i * s;
          const Scalar* bk = bn->data.data() + k * s;
          for (std::size_t j = 0; j < s; ++j) acc += gi[j] * bk[j];
          ga[i * q + k] += acc;
        }
    });
    accumulate(bn, [&](std::vector<Scalar>& gb) {
      // gb += a^T * g
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          const Scalar aik = an->data[i * q + k];
          const Scalar* gi = g.data() + i * s;
          Scalar* gbk = gb.data() + k * s;
          for (std::size_t j = 0; j < s; ++j) gbk[j] += aik * gi[j];
        }
    });
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<Scalar> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  NodePtr an = a.node();
  return apply_op("transpose", {c, r}, std::move(out), {a}, [an, r, c](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& ga) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[j * r + i];
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  NodePtr an = a.node(), bn = b.node();
  return apply_op("add", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
    accumulate(bn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  NodePtr an = a.node(), bn = b.node();
  return apply_op("sub", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
    accumulate(bn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  NodePtr an = a.node(), bn = b.node();
  return apply_op("mul", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->data[i];
    });
    accumulate(bn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->data[i];
    });
  });
}

Tensor scale(const Tensor& a, Scalar c) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
  NodePtr an = a.node();
  return apply_op("scale", a.shape(), std::move(out), {a}, [an, c](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    });
  });
}

Tensor scale_by(const Tensor& s, const Tensor& a) {
  if (s.numel() != 1) throw ShapeError("scale_by: factor must hold one value, got " + shape_str(s.shape()));
  const Scalar c = s[0];
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
  NodePtr sn = s.node(), an = a.node();
  return apply_op("scale_by", a.shape(), std::move(out), {s, a}, [sn, an](const TensorNode& o) {
    accumulate(sn, [&](std::vector<Scalar>& g) {
      Scalar acc = 0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * an->data[i];
      g[0] += acc;
    });
    accumulate(an, [&](std::vector<Scalar>& g) {
      const Scalar c = sn->data[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * o.grad[i];
    });
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row");
  const auto p = a.rows(), q = a.cols();
  if (bias.numel() != q) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not match rows of " + shape_str(a.shape()));
  }
  std::vector<Scalar> out(p * q);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a[i * q + j] + bias[j];
  NodePtr an = a.node(), bn = bias.node();
  return apply_op("add_row", {p, q}, std::move(out), {a, bias}, [an, bn, p, q](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
    accumulate(bn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) g[j] += o.grad[i * q + j];
    });
  });
}

Tensor relu(const Tensor& a) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > Scalar(0) ? a[i] : Scalar(0);
  NodePtr an = a.node();
  return apply_op("relu", a.shape(), std::move(out), {a}, [an](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (an->data[i] > Scalar(0)) g[i] += o.grad[i];
    });
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const auto p = x.rows(), q = x.cols();
  std::vector<Scalar> out(p * q);
  for (std::size_t i = 0; i < p; ++i) {
    const Scalar* xi = x.data().data() + i * q;
    Scalar* yi = out.data() + i * q;
    const Scalar mx = *std::max_element(xi, xi + q);
    Scalar z = 0;
    for (std::size_t j = 0; j < q; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    for (std::size_t j = 0; j < q; ++j) yi[j] /= z;
  }
  NodePtr xn = x.node();
  return apply_op("softmax_rows", {p, q}, std::move(out), {x}, [xn, p, q](const TensorNode& o) {
    accumulate(xn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < p; ++i) {
        const Scalar* yi = o.data.data() + i * q;
        const Scalar* gi = o.grad.data() + i * q;
        Scalar dotv = 0;
        for (std::size_t j = 0; j < q; ++j) dotv += gi[j] * yi[j];
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += yi[j] * (gi[j] - dotv);
      }
    });
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  const auto p = x.rows(), q = x.cols();
  std::vector<Scalar> out(p * q);
  for (std::size_t i = 0; i < p; ++i) {
    const Scalar* xi = x.data().data() + i * q;
    const Scalar mx = *std::max_element(xi, xi + q);
    Scalar z = 0;
    for (std::size_t j = 0; j < q; ++j) z += std::exp(xi[j] - mx);
    const Scalar lse = mx + std::log(z);
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] = xi[j] - lse;
  }
  NodePtr xn = x.node();
  return apply_op("log_softmax_rows", {p, q}, std::move(out), {x}, [xn, p, q](const TensorNode& o) {
    accumulate(xn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < p; ++i) {
        Scalar gs = 0;
        for (std::size_t j = 0; j < q; ++j) gs += o.grad[i * q + j];
        for (std::size_t j = 0; j < q; ++j)
          g[i * q + j] += o.grad[i * q + j] - std::exp(o.data[i * q + j]) * gs;
      }
    });
  });
}

Tensor sum(const Tensor& a) {
  Scalar s = 0;
  for (auto v : a.data()) s += v;
  NodePtr an = a.node();
  return apply_op("sum", {1}, {s}, {a}, [an](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (auto& v : g) v += o.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel())); }

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  Scalar s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  NodePtr an = a.node(), bn = b.node();
  return apply_op("dot", {1}, {s}, {a, b}, [an, bn](const TensorNode& o) {
    const Scalar g0 = o.grad[0];
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bn->data[i];
    });
    accumulate(bn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * an->data[i];
    });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  NodePtr an = a.node();
  return apply_op("reshape", std::move(shape), std::move(out), {a}, [an](const TensorNode& o) {
    accumulate(an, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
  });
}

TokenSeq flatten_rows(const Tensor& a) {
  require_matrix(a, "flatten_rows");
  return reshape(a, {a.rows(), a.cols()});
}

TokenSeq flatten_cols(const Tensor& a) {
  require_matrix(a, "flatten_cols");
  return flatten_rows(transpose(a));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const auto p = logits.rows(), q = logits.cols();
  if (labels.size() != p) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(p) + " rows");
  }
  std::vector<int> lab(labels.begin(), labels.end());
  for (int y : lab) {
    if (y < 0 || static_cast<std::size_t>(y) >= q) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(q) + ")");
    }
  }
  std::vector<Scalar> probs(p * q);
  Scalar loss = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const Scalar* xi = logits.data().data() + i * q;
    const Scalar mx = *std::max_element(xi, xi + q);
    Scalar z = 0;
    for (std::size_t j = 0; j < q; ++j) z += std::exp(xi[j] - mx);
    const Scalar lse = mx + std::log(z);
    for (std::size_t j = 0; j < q; ++j) probs[i * q + j] = std::exp(xi[j] - lse);
    loss += lse - xi[lab[i]];
  }
  loss /= static_cast<Scalar>(p);
  NodePtr ln = logits.node();
  return apply_op("cross_entropy", {1}, {loss}, {logits},
                  [ln, probs = std::move(probs), lab = std::move(lab), p, q](const TensorNode& o) {
                    accumulate(ln, [&](std::vector<Scalar>& g) {
                      const Scalar w = o.grad[0] / static_cast<Scalar>(p);
                      for (std::size_t i = 0; i < p; ++i)
                        for (std::size_t j = 0; j < q; ++j)
                          g[i * q + j] += w * (probs[i * q + j] - (static_cast<int>(j) == lab[i] ? 1 : 0));
                    });
                  });
}

Tensor to_channels_last(const Tensor& images, std::size_t channels, const MapGeometry& geom) {
  require_matrix(images, "to_channels_last");
  const auto n = geom.batch, h = geom.height, w = geom.width, c = channels;
  if (images.rows() != n || images.cols() != c * h * w) {
    throw ShapeError("to_channels_last: " + shape_str(images.shape()) + " is not " + std::to_string(n) + " images of " +
                     std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<Scalar> out(n * h * w * c);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t px = 0; px < h * w; ++px) out[(b * h * w + px) * c + ch] = images[b * c * h * w + ch * h * w + px];
  NodePtr in = images.node();
  return apply_op("to_channels_last", {n * h * w, c}, std::move(out), {images},
                  [in, n, h, w, c](const TensorNode& o) {
                    accumulate(in, [&](std::vector<Scalar>& g) {
                      for (std::size_t b = 0; b < n; ++b)
                        for (std::size_t ch = 0; ch < c; ++ch)
                          for (std::size_t px = 0; px < h * w; ++px)
                            g[b * c * h * w + ch * h * w + px] += o.grad[(b * h * w + px) * c + ch];
                    });
                  });
}

Tensor im2col(const Tensor& x, std::size_t channels, const MapGeometry& geom, std::size_t kh, std::size_t kw,
              std::size_t pad) {
  require_matrix(x, "im2col");
  const auto n = geom.batch, h = geom.height, w = geom.width, c = channels;
  if (x.rows() != n * h * w || x.cols() != c) {
    throw ShapeError("im2col: input " + shape_str(x.shape()) + " does not match geometry");
  }
  const std::size_t cols = c * kh * kw;
  const std::size_t rows = n * h * w;
  // Each output entry maps to at most one input entry; remember it for backward.
  std::vector<std::ptrdiff_t> src(rows * cols, -1);
  std::vector<Scalar> out(rows * cols, Scalar(0));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t row = (b * h + y) * w + xx;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
              const auto ix = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w))
                continue;
              const std::size_t col = (ch * kh + ky) * kw + kx;
              const auto s = static_cast<std::ptrdiff_t>(((b * h + static_cast<std::size_t>(iy)) * w +
                                                          static_cast<std::size_t>(ix)) * c + ch);
              src[row * cols + col] = s;
              out[row * cols + col] = x[static_cast<std::size_t>(s)];
            }
      }
  NodePtr xn = x.node();
  return apply_op("im2col", {rows, cols}, std::move(out), {x}, [xn, src = std::move(src)](const TensorNode& o) {
    accumulate(xn, [&](std::vector<Scalar>& g) {
      for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i] >= 0) g[static_cast<std::size_t>(src[i])] += o.grad[i];
    });
  });
}

Tensor avg_pool2(const Tensor& x, const MapGeometry& geom) {
  require_matrix(x, "avg_pool2");
  const auto n = geom.batch, h = geom.height, w = geom.width, c = x.cols();
  if (x.rows() != n * h * w) throw ShapeError("avg_pool2: input does not match geometry");
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avg_pool2: map size must be even");
  const auto oh = h / 2, ow = w / 2;
  std::vector<Scalar> out(n * oh * ow * c, Scalar(0));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t in_row = (b * h + 2 * y + dy) * w + 2 * xx + dx;
            const std::size_t out_row = (b * oh + y) * ow + xx;
            for (std::size_t ch = 0; ch < c; ++ch) out[out_row * c + ch] += Scalar(0.25) * x[in_row * c + ch];
          }
  NodePtr xn = x.node();
  return apply_op("avg_pool2", {n * oh * ow, c}, std::move(out), {x}, [xn, n, h, w, c, oh, ow](const TensorNode& o) {
    accumulate(xn, [&](std::vector<Scalar>& g) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t in_row = (b * h + 2 * y + dy) * w + 2 * xx + dx;
                const std::size_t out_row = (b * oh + y) * ow + xx;
                for (std::size_t ch = 0; ch < c; ++ch) g[in_row * c + ch] += Scalar(0.25) * o.grad[out_row * c + ch];
              }
    });
  });
}

Tensor global_avg_pool(const Tensor& x, const MapGeometry& geom) {
  require_matrix(x, "global_avg_pool");
  const auto n = geom.batch, hw = geom.height * geom.width, c = x.cols();
  if (x.rows() != n * hw) throw ShapeError("global_avg_pool: input does not match geometry");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(hw);
  std::vector<Scalar> out(n * c, Scalar(0));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t px = 0; px < hw; ++px)
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += inv * x[(b * hw + px) * c + ch];
  NodePtr xn = x.node();
  return apply_op("global_avg_pool", {n, c}, std::move(out), {x}, [xn, n, hw, c, inv](const TensorNode& o) {
    accumulate(xn, [&](std::vector<Scalar>& g) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t px = 0; px < hw; ++px)
          for (std::size_t ch = 0; ch < c; ++ch) g[(b * hw + px) * c + ch] += inv * o.grad[b * c + ch];
    });
  });
}

std::size_t topk_hits(const Tensor& logits, std::span<const int> labels, std::size_t k) {
  const auto p = logits.rows(), q = logits.cols();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const Scalar target = logits.at(i, static_cast<std::size_t>(labels[i]));
    // Rank = number of classes strictly ahead of the label; ties favour lower index.
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < q; ++j) {
      const Scalar v = logits.at(i, j);
      if (v > target || (v == target && j < static_cast<std::size_t>(labels[i]))) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return hits;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](Scalar v) { return std::isfinite(v); });
}

Scalar frobenius(const Tensor& a) {
  Scalar s = 0;
  for (auto v : a.data()) s += v * v;
  return std::sqrt(s);
}

Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  Scalar m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mergenet
