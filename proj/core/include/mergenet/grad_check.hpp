#ifndef MERGENET_GRAD_CHECK_HPP
#define MERGENET_GRAD_CHECK_HPP

#include <cstddef>
#include <functional>
#include <vector>

#include "mergenet/tensor.hpp"

namespace mergenet {

struct GradCheckReport {
  Scalar max_rel_error = 0;
  Scalar max_abs_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  bool passed = true;
};

/*
 * Compares reverse-mode gradients with central finite differences.
 *
 * The relative error of one coordinate is |g_auto - g_fd| / max(|g_auto|,
 * |g_fd|, kGradCheckFloor); the floor keeps coordinates whose true gradient
 * is zero from dividing round-off by round-off.
 */
inline constexpr Scalar kGradCheckFloor = Scalar(1e-3);
inline constexpr Scalar kGradCheckStep = Scalar(1e-5);

using ScalarFn = std::function<Tensor(const Tensor&)>;
using MultiScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, Scalar tol, Scalar step = kGradCheckStep);

/// Checks the gradient with respect to every input of `f`.
GradCheckReport grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs, Scalar tol,
                           Scalar step = kGradCheckStep);

/// Central-difference gradient of a scalar function, evaluated without a tape.
std::vector<Scalar> numeric_gradient(const ScalarFn& f, const Tensor& x, Scalar step = kGradCheckStep);

}  // namespace mergenet

#endif  // MERGENET_GRAD_CHECK_HPP
