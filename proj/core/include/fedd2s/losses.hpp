#pragma once

#include "fedd2s/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedd2s {

using Labels = std::vector<std::int32_t>;

/// Probabilities are clamped to [kProbFloor, 1] inside logarithms.
inline constexpr double kProbFloor = 1e-12;

/// Row-wise softmax(logits / tau), max-subtracted. Throws ArgumentError for tau <= 0.
Tensor tempered_softmax(const Tensor& logits, double tau);

/// Mean over rows of -log softmax(logits / tau)[label].
double cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels, double tau);

/// Mean over rows of sum teacher * (ln teacher - ln student).
double kl_divergence(const Tensor& student_probs, const Tensor& teacher_probs);

/// Mean of squared element-wise differences.
double mse(const Tensor& a, const Tensor& b);

/// Which direction of the divergence a distillation loss minimizes.
enum class KlOrder {
    teacher_student,  // KL(teacher || student), standard distillation
    student_teacher,  // KL(student || teacher), reverse, for ablations
};

struct LossGrad {
    double value = 0.0;
    Tensor grad;  // d value / d first argument
};

LossGrad cross_entropy_with_grad(const Tensor& logits, std::span<const std::int32_t> labels, double tau);

/// tau^2 * KL between softmax(student_logits / tau) and fixed teacher
/// probabilities. The gradient is taken w.r.t. the student logits only.
LossGrad distillation_loss(const Tensor& student_logits, const Tensor& teacher_probs, double tau,
                           KlOrder order = KlOrder::teacher_student);

/// mse(prediction, target) and its gradient w.r.t. prediction.
LossGrad mse_with_grad(const Tensor& prediction, const Tensor& target);

}  // namespace fedd2s
