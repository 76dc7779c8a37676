#include "mergenet/losses.hpp"

#include <cmath>

#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"

namespace mergenet {

Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, Scalar temperature, Scalar alpha,
               std::span<const int> labels) {
  if (!(temperature > 0)) throw ContractError("kd_loss: temperature must be positive");
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("kd_loss: student " + shape_str(student_logits.shape()) + " vs teacher " +
                     shape_str(teacher_logits.shape()));
  }
  const auto batch = static_cast<Scalar>(student_logits.rows());
  Tensor teacher_logp;
  {
    NoGradScope no_grad;
    teacher_logp = log_softmax_rows(scale(teacher_logits.detach(), 1 / temperature));
  }
  Tensor teacher_p = teacher_logp.detach();
  for (auto& v : teacher_p.data()) v = std::exp(v);

  Tensor student_logp = log_softmax_rows(scale(student_logits, 1 / temperature));
  Tensor kl = scale(dot(teacher_p, sub(teacher_logp, student_logp)), 1 / batch);
  Tensor distill = scale(kl, alpha * temperature * temperature);
  if (alpha == Scalar(1)) return distill;
  return add(distill, scale(cross_entropy(student_logits, labels), 1 - alpha));
}

}  // namespace mergenet
