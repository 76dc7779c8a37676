#include "mergenet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mergenet/errors.hpp"

namespace mergenet {

std::vector<Scalar> numeric_gradient(const ScalarFn& f, const Tensor& x, Scalar step) {
  NoGradScope no_grad;
  std::vector<Scalar> out(x.numel());
  auto probe = x.detach();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + step;
    const Scalar fp = f(probe).item();
    probe[i] = orig - step;
    const Scalar fm = f(probe).item();
    probe[i] = orig;
    out[i] = (fp - fm) / (2 * step);
  }
  return out;
}

GradCheckReport grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs, Scalar tol, Scalar step) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) {
    auto leaf = t.detach();
    leaf.set_requires_grad(true);
    leaves.push_back(leaf);
  }
  {
    GradTape tape;
    TapeScope scope(tape);
    auto y = f(leaves);
    if (y.numel() != 1) throw ContractError("grad_check: function is not scalar-valued");
    tape.backward(y);
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    ScalarFn partial = [&](const Tensor& xk) {
      std::vector<Tensor> args;
      for (std::size_t j = 0; j < inputs.size(); ++j) args.push_back(j == k ? xk : inputs[j].detach());
      return f(args);
    };
    const auto fd = numeric_gradient(partial, inputs[k], step);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const Scalar a = leaves[k].has_grad() ? leaves[k].grad()[i] : Scalar(0);
      const Scalar n = fd[i];
      const Scalar abs_err = std::abs(a - n);
      const Scalar rel = abs_err / std::max({std::abs(a), std::abs(n), kGradCheckFloor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<Scalar>::infinity();
        report.worst_input = k;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, Scalar tol, Scalar step) {
  return grad_check(MultiScalarFn([&](const std::vector<Tensor>& v) { return f(v[0]); }), {x}, tol, step);
}

}  // namespace mergenet
