#ifndef MERGENET_TESTS_ORACLES_HPP
#define MERGENET_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "mergenet/rng.hpp"
#include "mergenet/tensor.hpp"

namespace mergenet::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Scalar>(scale * rng.normal());
  return Tensor(std::move(shape), std::move(v));
}

inline std::size_t random_dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

/// A rows x cols matrix of exact rank r (product of two Gaussian factors).
inline Tensor random_rank_matrix(std::size_t rows, std::size_t cols, std::size_t r, Rng& rng) {
  const Tensor u = random_tensor({rows, r}, rng);
  const Tensor v = random_tensor({r, cols}, rng);
  std::vector<Scalar> out(rows * cols, 0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += u.at(i, k) * v.at(k, j);
  return Tensor({rows, cols}, std::move(out));
}

struct JacobiSvd {
  std::vector<std::vector<double>> u;  // columns of U, length rows
  std::vector<double> s;               // descending
  std::vector<std::vector<double>> v;  // columns of V, length cols
};

/// One-sided Jacobi SVD; independent of the library's subspace iteration.
inline JacobiSvd jacobi_svd(const Tensor& w) {
  const std::size_t rows = w.rows(), cols = w.cols();
  std::vector<std::vector<double>> a(cols, std::vector<double>(rows));
  std::vector<std::vector<double>> v(cols, std::vector<double>(cols, 0.0));
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) a[j][i] = w.at(i, j);
    v[j][j] = 1.0;
  }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += a[p][i] * a[p][i];
          beta += a[q][i] * a[q][i];
          gamma += a[p][i] * a[q][i];
        }
        if (std::abs(gamma) <= 1e-300) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const double c = 1 / std::sqrt(1 + t * t), s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double x = a[p][i], y = a[q][i];
          a[p][i] = c * x - s * y;
          a[q][i] = s * x + c * y;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double x = v[p][i], y = v[q][i];
          v[p][i] = c * x - s * y;
          v[q][i] = s * x + c * y;
        }
      }
    }
    if (off < 1e-15) break;
  }
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double n = 0;
    for (double x : a[j]) n += x * x;
    norms[j] = std::sqrt(n);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });
  JacobiSvd out;
  for (std::size_t j : order) {
    out.s.push_back(norms[j]);
    std::vector<double> col = a[j];
    if (norms[j] > 0)
      for (auto& x : col) x /= norms[j];
    out.u.push_back(std::move(col));
    out.v.push_back(v[j]);
  }
  return out;
}

/// Frobenius error of the best rank-r approximation, from the oracle spectrum.
inline double oracle_truncation_error(const Tensor& w, std::size_t r) {
  const auto svd = jacobi_svd(w);
  double e = 0;
  for (std::size_t k = r; k < svd.s.size(); ++k) e += svd.s[k] * svd.s[k];
  return std::sqrt(e);
}

inline double frobenius_diff(const Tensor& a, const Tensor& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) e += double(a[i] - b[i]) * double(a[i] - b[i]);
  return std::sqrt(e);
}

inline Tensor product(const Tensor& b, const Tensor& a) {
  std::vector<Scalar> out(b.rows() * a.cols(), 0);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t k = 0; k < b.cols(); ++k)
      for (std::size_t j = 0; j < a.cols(); ++j) out[i * a.cols() + j] += b.at(i, k) * a.at(k, j);
  return Tensor({b.rows(), a.cols()}, std::move(out));
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

}  // namespace mergenet::testing

#endif  // MERGENET_TESTS_ORACLES_HPP
