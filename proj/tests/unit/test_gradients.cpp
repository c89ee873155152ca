#include "fedd2s/model.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace fedd2s;

namespace {

Tensor batch_for(const ModelSpec& spec, std::size_t n, Rng& rng) {
    Shape s{n};
    s.insert(s.end(), spec.input_shape().begin(), spec.input_shape().end());
    return oracle::random_tensor(s, rng, 0.0, 1.0);
}

void expect_gradients_match(oracle::LossKind kind, double tau, std::uint64_t seed) {
    Rng rng(seed);
    for (int trial = 0; trial < 8; ++trial) {
        const auto spec = oracle::random_spec(rng, 600);
        const auto params = oracle::random_params(spec, rng);
        const auto x = batch_for(spec, 3, rng);
        const auto c = oracle::make_loss_case(spec, params, x, kind, tau, rng);
        const auto result = oracle::check_gradients(spec, params, x, c.value, c.analytic);
        EXPECT_LT(result.worst_rel, 1e-4) << format_architecture(spec) << ": " << result.worst_where;
        EXPECT_LE(result.kinks * 100, result.checked) << "too many ReLU kinks to be informative";
    }
}

}  // namespace

TEST(GradientCheck, CrossEntropy) { expect_gradients_match(oracle::LossKind::ce, 1.0, 101); }
TEST(GradientCheck, CrossEntropyTempered) { expect_gradients_match(oracle::LossKind::ce, 3.0, 102); }
TEST(GradientCheck, DistillationLowTemperature) { expect_gradients_match(oracle::LossKind::kl, 0.5, 103); }
TEST(GradientCheck, DistillationUnitTemperature) { expect_gradients_match(oracle::LossKind::kl, 1.0, 104); }
TEST(GradientCheck, DistillationHighTemperature) { expect_gradients_match(oracle::LossKind::kl, 4.0, 105); }
TEST(GradientCheck, Mse) { expect_gradients_match(oracle::LossKind::mse, 1.0, 106); }

TEST(GradientCheck, InputGradientThroughConvStack) {
    Rng rng(107);
    const auto spec = make_desk({4, 4, 1}, 3);
    const auto params = oracle::random_params(spec, rng);
    auto x = batch_for(spec, 2, rng);
    const Labels y{0, 2};
    const auto trace = trace_range(spec, params, x, 0, spec.depth());
    const auto analytic =
        backward(spec, params, trace, cross_entropy_with_grad(trace.output(), y, 1.0).grad, LayerRange::none()).input_grad;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + 1e-6;
        const double up = cross_entropy(forward(spec, params, x), y, 1.0);
        x[i] = saved - 1e-6;
        const double down = cross_entropy(forward(spec, params, x), y, 1.0);
        x[i] = saved;
        EXPECT_NEAR(analytic[i], (up - down) / 2e-6, 1e-6);
    }
}
