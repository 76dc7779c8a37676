#include "mergenet/param_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"
#include "mergenet/rng.hpp"

namespace mergenet {

LowRankParam::LowRankParam(Tensor b_factor, Tensor a_factor, std::string id)
    : b(std::move(b_factor)), a(std::move(a_factor)), slot_id(std::move(id)) {
  if (!b.is_matrix() || !a.is_matrix()) throw ShapeError("low-rank factors must be 2-D");
  if (b.cols() != a.rows()) {
    throw ShapeError("factor ranks disagree: b " + shape_str(b.shape()) + ", a " + shape_str(a.shape()));
  }
  if (a.rows() > std::min(b.rows(), a.cols())) {
    throw ContractError("rank " + std::to_string(a.rows()) + " exceeds min(" + std::to_string(b.rows()) + ", " +
                        std::to_string(a.cols()) + ")");
  }
}

LowRankParam LowRankParam::clone() const { return LowRankParam(b.clone(), a.clone(), slot_id); }

void ParamPartition::validate(const std::vector<std::string>& all) const {
  std::set<std::string> t(transfer_slots.begin(), transfer_slots.end());
  std::set<std::string> u(frozen_or_local.begin(), frozen_or_local.end());
  for (const auto& s : t) {
    if (u.count(s)) throw ContractError("slot '" + s + "' is both transfer and local");
  }
  std::set<std::string> everything(all.begin(), all.end());
  std::set<std::string> covered = t;
  covered.insert(u.begin(), u.end());
  if (covered != everything) throw ContractError("partition does not cover the model's parameters");
}

Tensor densify(const LowRankParam& p) { return matmul(p.b, p.a); }

namespace {

// Dense column-major-free helpers on plain row-major buffers.
using Mat = std::vector<Scalar>;

Scalar col_dot(const Mat& m, std::size_t rows, std::size_t cols, std::size_t c1, const Mat& n, std::size_t c2) {
  Scalar s = 0;
  for (std::size_t i = 0; i < rows; ++i) s += m[i * cols + c1] * n[i * cols + c2];
  return s;
}

// Orthonormalises the columns of q (rows x k) in place with two passes of
// modified Gram-Schmidt. Columns that collapse are replaced by the first
// standard basis vector that survives orthogonalisation, which keeps the
// completion deterministic across sweeps.
void orthonormalize_columns(Mat& q, std::size_t rows, std::size_t k, Scalar scale) {
  const Scalar collapse = std::max(scale, Scalar(1e-300)) * Scalar(1e-12);
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < k; ++j) {
    auto project_out = [&]() {
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t p = 0; p < j; ++p) {
          const Scalar d = col_dot(q, rows, k, p, q, j);
          for (std::size_t i = 0; i < rows; ++i) q[i * k + j] -= d * q[i * k + p];
        }
    };
    project_out();
    Scalar norm = std::sqrt(col_dot(q, rows, k, j, q, j));
    Scalar threshold = collapse;
    while (norm <= threshold) {
      if (next_basis >= rows) throw ContractError("cannot complete an orthonormal basis");
      for (std::size_t i = 0; i < rows; ++i) q[i * k + j] = (i == next_basis) ? Scalar(1) : Scalar(0);
      ++next_basis;
      project_out();
      norm = std::sqrt(col_dot(q, rows, k, j, q, j));
      threshold = Scalar(1e-8);
    }
    for (std::size_t i = 0; i < rows; ++i) q[i * k + j] /= norm;
  }
}

// Cyclic Jacobi eigen-decomposition of a small symmetric matrix. On return
// `h` is (numerically) diagonal and `v` holds the eigenvectors as columns.
void jacobi_eigen(Mat& h, Mat& v, std::size_t n) {
  v.assign(n * n, Scalar(0));
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1;
  for (int sweep = 0; sweep < 100; ++sweep) {
    Scalar off = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += h[i * n + j] * h[i * n + j];
        if (i != j) off += h[i * n + j] * h[i * n + j];
      }
    if (off <= total * Scalar(1e-30) || off == 0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const Scalar hpq = h[p * n + q];
        if (hpq == 0) continue;
        const Scalar theta = (h[q * n + q] - h[p * n + p]) / (2 * hpq);
        const Scalar t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const Scalar hkp = h[k * n + p], hkq = h[k * n + q];
          h[k * n + p] = c * hkp - s * hkq;
          h[k * n + q] = s * hkp + c * hkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const Scalar hpk = h[p * n + k], hqk = h[q * n + k];
          h[p * n + k] = c * hpk - s * hqk;
          h[q * n + k] = s * hpk + c * hqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const Scalar vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
}

}  // namespace

Reencoded reencode_truncated_svd(const Tensor& w, std::size_t r, const SvdOptions& opts, const std::string& slot_id) {
  if (!w.is_matrix()) throw ShapeError("reencode_truncated_svd: expected 2-D weight, got " + shape_str(w.shape()));
  const std::size_t rows = w.rows(), cols = w.cols();
  if (r == 0 || r > std::min(rows, cols)) {
    throw ContractError("reencode_truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                        std::to_string(std::min(rows, cols)) + "]");
  }
  if (opts.iters == 0) throw ContractError("reencode_truncated_svd: iters must be >= 1");

  const auto wd = w.data();
  // Gram matrix g = w * w^T (rows x rows).
  Mat g(rows * rows, Scalar(0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = i; j < rows; ++j) {
      Scalar s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += wd[i * cols + c] * wd[j * cols + c];
      g[i * rows + j] = g[j * rows + i] = s;
    }
  Scalar gscale = 0;
  for (auto v : g) gscale = std::max(gscale, std::abs(v));

  // The iterated block is oversampled so the leading r directions converge
  // at rate (sigma_{k+1} / sigma_r)^2 rather than (sigma_{r+1} / sigma_r)^2.
  const std::size_t k = std::min(rows, 2 * r + 4);
  Rng rng(opts.seed);
  Mat q(rows * k);
  for (auto& v : q) v = static_cast<Scalar>(rng.normal());
  orthonormalize_columns(q, rows, k, 1);

  Reencoded out;
  Mat z(rows * k);
  for (std::size_t it = 1; it <= opts.iters; ++it) {
    std::fill(z.begin(), z.end(), Scalar(0));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t l = 0; l < rows; ++l) {
        const Scalar gil = g[i * rows + l];
        if (gil == 0) continue;
        for (std::size_t j = 0; j < k; ++j) z[i * k + j] += gil * q[l * k + j];
      }
    orthonormalize_columns(z, rows, k, gscale);
    // Part of the new basis lying outside the old span.
    Mat proj(k * k, Scalar(0));
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) proj[a * k + b] = col_dot(q, rows, k, a, z, b);
    Scalar rot = 0;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t b = 0; b < k; ++b) {
        Scalar v = z[i * k + b];
        for (std::size_t a = 0; a < k; ++a) v -= q[i * k + a] * proj[a * k + b];
        rot += v * v;
      }
    q.swap(z);
    out.iterations = it;
    if (std::sqrt(rot) < opts.tol) {
      out.converged = true;
      break;
    }
  }

  // Rayleigh-Ritz: h = q^T g q, eigenvectors rotate q into singular directions.
  Mat gq(rows * k, Scalar(0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t l = 0; l < rows; ++l)
      for (std::size_t j = 0; j < k; ++j) gq[i * k + j] += g[i * rows + l] * q[l * k + j];
  Mat h(k * k, Scalar(0));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) h[a * k + b] = col_dot(q, rows, k, a, gq, b);
  Mat v;
  jacobi_eigen(h, v, k);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return h[x * k + x] > h[y * k + y]; });

  Mat u(rows * r, Scalar(0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t jj = 0; jj < r; ++jj) {
      const std::size_t j = order[jj];
      Scalar s = 0;
      for (std::size_t l = 0; l < k; ++l) s += q[i * k + l] * v[l * k + j];
      u[i * r + jj] = s;
    }

  // a rows: w^T u_j / sigma_j; directions with vanishing sigma get an
  // orthonormal completion so a stays row-orthonormal.
  Mat a(r * cols, Scalar(0));
  std::vector<Scalar> sigma(r, Scalar(0));
  Scalar sigma_max = 0;
  for (std::size_t j = 0; j < r; ++j) {
    Scalar norm2 = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      Scalar s = 0;
      for (std::size_t i = 0; i < rows; ++i) s += wd[i * cols + c] * u[i * r + j];
      a[j * cols + c] = s;
      norm2 += s * s;
    }
    sigma[j] = std::sqrt(norm2);
    sigma_max = std::max(sigma_max, sigma[j]);
  }
  std::vector<bool> live(r, false);
  for (std::size_t j = 0; j < r; ++j) {
    if (sigma[j] > 0 && sigma[j] > sigma_max * Scalar(1e-12)) {
      live[j] = true;
      for (std::size_t c = 0; c < cols; ++c) a[j * cols + c] /= sigma[j];
    } else {
      sigma[j] = 0;
    }
  }
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < r; ++j) {
    if (live[j]) continue;
    for (;;) {
      if (next_basis >= cols) throw ContractError("cannot complete factor rows");
      for (std::size_t c = 0; c < cols; ++c) a[j * cols + c] = (c == next_basis) ? Scalar(1) : Scalar(0);
      ++next_basis;
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t p = 0; p < r; ++p) {
          if (!live[p]) continue;
          Scalar d = 0;
          for (std::size_t c = 0; c < cols; ++c) d += a[p * cols + c] * a[j * cols + c];
          for (std::size_t c = 0; c < cols; ++c) a[j * cols + c] -= d * a[p * cols + c];
        }
      Scalar n2 = 0;
      for (std::size_t c = 0; c < cols; ++c) n2 += a[j * cols + c] * a[j * cols + c];
      if (n2 > Scalar(1e-8)) {
        const Scalar n = std::sqrt(n2);
        for (std::size_t c = 0; c < cols; ++c) a[j * cols + c] /= n;
        live[j] = true;
        break;
      }
    }
  }

  Mat b(rows * r);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < r; ++j) b[i * r + j] = u[i * r + j] * sigma[j];

  out.param = LowRankParam(Tensor({rows, r}, std::move(b)), Tensor({r, cols}, std::move(a)), slot_id);
  out.singular_values = std::move(sigma);
  return out;
}

Tensor reshape_conv_kernel(const Tensor& kernel) {
  if (kernel.rank() != 4) throw ShapeError("reshape_conv_kernel: expected 4-D kernel, got " + shape_str(kernel.shape()));
  const auto& s = kernel.shape();
  return reshape(kernel, {s[0], s[1] * s[2] * s[3]});
}

Tensor unreshape_conv_kernel(const Tensor& matrix, std::size_t in_channels, std::size_t kh, std::size_t kw) {
  if (!matrix.is_matrix()) throw ShapeError("unreshape_conv_kernel: expected 2-D matrix, got " + shape_str(matrix.shape()));
  if (matrix.cols() != in_channels * kh * kw) {
    throw ShapeError("unreshape_conv_kernel: " + shape_str(matrix.shape()) + " is not out x " +
                     std::to_string(in_channels) + "*" + std::to_string(kh) + "*" + std::to_string(kw));
  }
  return reshape(matrix, {matrix.rows(), in_channels, kh, kw});
}

}  // namespace mergenet
