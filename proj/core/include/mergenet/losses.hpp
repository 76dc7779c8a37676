#ifndef MERGENET_LOSSES_HPP
#define MERGENET_LOSSES_HPP

#include <span>

#include "mergenet/tensor.hpp"

namespace mergenet {

/*
 * Logit distillation loss:
 *
 *   alpha * tau^2 * KL(softmax(teacher / tau) || softmax(student / tau))
 *     + (1 - alpha) * cross_entropy(student, labels)
 *
 * averaged over the batch. The teacher logits are treated as constants.
 */
Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, Scalar temperature, Scalar alpha,
               std::span<const int> labels);

}  // namespace mergenet

#endif  // MERGENET_LOSSES_HPP
