#include "fedd2s/errors.hpp"
#include "fedd2s/losses.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fedd2s;

TEST(Softmax, UniformLogitsGiveUniformProbabilities) {
    for (double tau : {0.5, 1.0, 7.0}) {
        const auto p = tempered_softmax(Tensor({1, 3}, {0, 0, 0}), tau);
        for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    }
}

TEST(Softmax, TwoLogitsClosedForm) {
    const auto p = tempered_softmax(Tensor({1, 2}, {1, 2}), 1.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(p[0], 1.0 / (1.0 + e), 1e-15);
    EXPECT_NEAR(p[1], e / (1.0 + e), 1e-15);
    EXPECT_NEAR(p[0], 0.2689, 1e-4);
}

TEST(Softmax, HugeTemperatureApproachesUniform) {
    const auto p = tempered_softmax(Tensor({1, 2}, {5, -5}), 1e6);
    EXPECT_NEAR(p[0], 0.5, 1e-5);
    EXPECT_NEAR(p[1], 0.5, 1e-5);
}

TEST(Softmax, RowsAreDistributionsEvenForExtremeLogits) {
    Rng rng(1);
    auto logits = oracle::random_tensor({50, 6}, rng, -800.0, 800.0);
    for (double tau : {0.1, 1.0, 4.0}) {
        const auto p = tempered_softmax(logits, tau);
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double sum = 0.0;
            for (double v : p.row(r)) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Softmax, RejectsNonPositiveTemperature) {
    EXPECT_THROW(tempered_softmax(Tensor({1, 2}), 0.0), ArgumentError);
    EXPECT_THROW(tempered_softmax(Tensor({1, 2}), -1.0), ArgumentError);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
    EXPECT_LE(cross_entropy(Tensor({1, 2}, {20, 0}), Labels{0}, 1.0), 1e-4);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
    for (std::size_t c : {2u, 5u, 10u}) {
        EXPECT_NEAR(cross_entropy(Tensor({1, c}), Labels{0}, 1.0), std::log(static_cast<double>(c)), 1e-12);
    }
}

TEST(CrossEntropy, HandComputedValue) {
    EXPECT_NEAR(cross_entropy(Tensor({1, 2}, {1, 2}), Labels{0}, 1.0), 1.3133, 1e-4);
    EXPECT_NEAR(cross_entropy(Tensor({1, 2}, {1, 2}), Labels{0}, 1.0), std::log(1.0 + std::exp(1.0)), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
    EXPECT_THROW(cross_entropy(Tensor({1, 2}), Labels{2}, 1.0), ArgumentError);
    EXPECT_THROW(cross_entropy(Tensor({1, 2}), Labels{-1}, 1.0), ArgumentError);
    EXPECT_THROW(cross_entropy(Tensor({2, 2}), Labels{0}, 1.0), ArgumentError);
}

TEST(KlDivergence, IdenticalDistributionsGiveExactZero) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = tempered_softmax(oracle::random_tensor({5, 4}, rng, -5, 5), 1.0);
        EXPECT_EQ(kl_divergence(p, p), 0.0);
    }
    const Tensor onehot({1, 3}, {0, 1, 0});
    EXPECT_EQ(kl_divergence(onehot, onehot), 0.0);
}

TEST(KlDivergence, OneHotTeacherAgainstUniformStudent) {
    EXPECT_NEAR(kl_divergence(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {1.0, 0.0})), std::log(2.0), 1e-12);
}

TEST(KlDivergence, ClampKeepsZeroStudentFinite) {
    const double v = kl_divergence(Tensor({1, 2}, {0.0, 1.0}), Tensor({1, 2}, {1.0, 0.0}));
    EXPECT_NEAR(v, -std::log(1e-12), 1e-9);
}

TEST(KlDivergence, GibbsInequalityOnRandomPairs) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = tempered_softmax(oracle::random_tensor({3, 5}, rng, -6, 6), 1.0);
        const auto t = tempered_softmax(oracle::random_tensor({3, 5}, rng, -6, 6), 1.0);
        EXPECT_GE(kl_divergence(s, t), -1e-9);
    }
}

TEST(KlDivergence, ShapeMismatch) {
    EXPECT_THROW(kl_divergence(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 3}, {0.2, 0.3, 0.5})), ArgumentError);
}

TEST(Mse, Examples) {
    EXPECT_EQ(mse(Tensor({2}, {1, 2}), Tensor({2}, {1, 2})), 0.0);
    EXPECT_EQ(mse(Tensor({2}, {0, 0}), Tensor({2}, {1, 1})), 1.0);
    EXPECT_EQ(mse(Tensor({2}, {1, 2}), Tensor({2}, {3, 0})), 4.0);
    EXPECT_THROW(mse(Tensor({2}), Tensor({3})), ArgumentError);
}

TEST(DistillationLoss, ScalesKlByTauSquared) {
    Rng rng(4);
    const auto z = oracle::random_tensor({4, 3}, rng, -2, 2);
    const auto teacher = tempered_softmax(oracle::random_tensor({4, 3}, rng, -2, 2), 2.5);
    const auto loss = distillation_loss(z, teacher, 2.5);
    EXPECT_NEAR(loss.value, 2.5 * 2.5 * kl_divergence(tempered_softmax(z, 2.5), teacher), 1e-12);
}

TEST(DistillationLoss, ZeroGradientAtMinimum) {
    Rng rng(5);
    const auto z = oracle::random_tensor({4, 3}, rng, -2, 2);
    const auto loss = distillation_loss(z, tempered_softmax(z, 1.5), 1.5);
    EXPECT_EQ(loss.value, 0.0);
    for (double g : loss.grad.values()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(DistillationLoss, GradientMatchesFiniteDifferencesOnLogits) {
    Rng rng(6);
    for (auto order : {KlOrder::teacher_student, KlOrder::student_teacher}) {
        for (double tau : {0.5, 1.0, 4.0}) {
            auto z = oracle::random_tensor({3, 4}, rng, -2, 2);
            const auto teacher = tempered_softmax(oracle::random_tensor({3, 4}, rng, -2, 2), tau);
            const auto analytic = distillation_loss(z, teacher, tau, order).grad;
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double saved = z[i];
                z[i] = saved + 1e-5;
                const double up = distillation_loss(z, teacher, tau, order).value;
                z[i] = saved - 1e-5;
                const double down = distillation_loss(z, teacher, tau, order).value;
                z[i] = saved;
                EXPECT_NEAR(analytic[i], (up - down) / 2e-5, 1e-7);
            }
        }
    }
}

TEST(DistillationLoss, ReverseOrderValue) {
    const Tensor z({1, 2}, {0.0, 0.0});
    const Tensor teacher({1, 2}, {0.25, 0.75});
    const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    EXPECT_NEAR(distillation_loss(z, teacher, 1.0, KlOrder::student_teacher).value, expected, 1e-12);
}
