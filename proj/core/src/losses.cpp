#include "fedd2s/losses.hpp"

#include "fedd2s/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fedd2s {

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ArgumentError("temperature must be positive and finite");
}

void check_batched(const Tensor& t, const char* what) {
    if (t.rank() < 2) throw ArgumentError(std::string(what) + " must be a (batch, classes) tensor");
}

void check_labels(const Tensor& logits, std::span<const std::int32_t> labels) {
    check_batched(logits, "logits");
    if (labels.size() != logits.rows()) {
        throw ArgumentError("label count " + std::to_string(labels.size()) + " does not match batch " +
                            std::to_string(logits.rows()));
    }
    const auto classes = static_cast<std::int32_t>(logits.row_size());
    for (auto y : labels) {
        if (y < 0 || y >= classes) {
            throw ArgumentError("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
        }
    }
}

double clamped_log(double p) { return std::log(std::clamp(p, kProbFloor, 1.0)); }

}  // namespace

Tensor tempered_softmax(const Tensor& logits, double tau) {
    check_tau(tau);
    check_batched(logits, "logits");
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto z = logits.row(i);
        auto p = out.row(i);
        const double peak = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            p[j] = std::exp((z[j] - peak) / tau);
            total += p[j];
        }
        for (auto& v : p) v /= total;
    }
    return out;
}

double cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels, double tau) {
    return cross_entropy_with_grad(logits, labels, tau).value;
}

LossGrad cross_entropy_with_grad(const Tensor& logits, std::span<const std::int32_t> labels, double tau) {
    check_tau(tau);
    check_labels(logits, labels);
    const auto batch = logits.rows();
    LossGrad out{0.0, tempered_softmax(logits, tau)};
    const double scale = 1.0 / (tau * static_cast<double>(batch));
    for (std::size_t i = 0; i < batch; ++i) {
        auto z = logits.row(i);
        const double peak = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (double v : z) total += std::exp((v - peak) / tau);
        const auto y = static_cast<std::size_t>(labels[i]);
        out.value += std::log(total) - (z[y] - peak) / tau;
        auto g = out.grad.row(i);
        g[y] -= 1.0;
        for (auto& v : g) v *= scale;
    }
    out.value /= static_cast<double>(batch);
    return out;
}

double kl_divergence(const Tensor& student_probs, const Tensor& teacher_probs) {
    if (student_probs.shape() != teacher_probs.shape()) {
        throw ArgumentError("kl_divergence shape mismatch: " + shape_string(student_probs.shape()) + " vs " +
                            shape_string(teacher_probs.shape()));
    }
    check_batched(student_probs, "probabilities");
    double total = 0.0;
    const auto s = student_probs.values();
    const auto t = teacher_probs.values();
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (t[i] > 0.0) total += t[i] * (clamped_log(t[i]) - clamped_log(s[i]));
    }
    return total / static_cast<double>(student_probs.rows());
}

LossGrad distillation_loss(const Tensor& student_logits, const Tensor& teacher_probs, double tau, KlOrder order) {
    check_tau(tau);
    if (student_logits.shape() != teacher_probs.shape()) {
        throw ArgumentError("distillation shape mismatch: " + shape_string(student_logits.shape()) + " vs " +
                            shape_string(teacher_probs.shape()));
    }
    const auto student = tempered_softmax(student_logits, tau);
    const auto batch = static_cast<double>(student.rows());
    LossGrad out{0.0, Tensor(student.shape())};
    if (order == KlOrder::teacher_student) {
        out.value = tau * tau * kl_divergence(student, teacher_probs);
        // d/dz [tau^2 KL(t || softmax(z/tau))] = tau (p - t)
        const auto p = student.values();
        const auto t = teacher_probs.values();
        auto g = out.grad.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = tau * (p[i] - t[i]) / batch;
    } else {
        out.value = tau * tau * kl_divergence(teacher_probs, student);
        // d/dz_k [tau^2 sum_j p_j (ln p_j - ln t_j)] = tau p_k (g_k - sum_j p_j g_j)
        for (std::size_t r = 0; r < student.rows(); ++r) {
            auto p = student.row(r);
            auto t = teacher_probs.row(r);
            auto g = out.grad.row(r);
            double mean = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                g[j] = clamped_log(p[j]) - clamped_log(t[j]);
                mean += p[j] * g[j];
            }
            for (std::size_t j = 0; j < p.size(); ++j) g[j] = tau * p[j] * (g[j] - mean) / batch;
        }
    }
    return out;
}

double mse(const Tensor& a, const Tensor& b) { return mse_with_grad(a, b).value; }

LossGrad mse_with_grad(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw ArgumentError("mse shape mismatch: " + shape_string(prediction.shape()) + " vs " +
                            shape_string(target.shape()));
    }
    if (prediction.empty()) throw ArgumentError("mse of empty tensors");
    const auto n = static_cast<double>(prediction.size());
    LossGrad out{0.0, Tensor(prediction.shape())};
    const auto a = prediction.values();
    const auto b = target.values();
    auto g = out.grad.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        out.value += d * d;
        g[i] = 2.0 * d / n;
    }
    out.value /= n;
    return out;
}

}  // namespace fedd2s
