#include "fedd2s/adam.hpp"

#include "fedd2s/errors.hpp"

#include <cmath>

namespace fedd2s {

AdamState AdamState::for_model(const ModelSpec& spec) {
    return {ModelParams::zeros(spec), ModelParams::zeros(spec), 0};
}

namespace {

void update(std::span<double> theta, std::span<const double> g, std::span<double> m, std::span<double> v, double lr,
            double c1, double c2, const AdamConfig& cfg) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

}  // namespace

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, LayerRange range,
               const AdamConfig& config) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment)) {
        throw ArgumentError("adam_step: parameter, gradient and moment shapes differ");
    }
    if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t l = 1; l <= params.depth(); ++l) {
        if (!range.contains(l)) continue;
        auto& p = params.block(l);
        const auto& g = grads.block(l);
        auto& m = state.first_moment.block(l);
        auto& v = state.second_moment.block(l);
        update(p.weight.values(), g.weight.values(), m.weight.values(), v.weight.values(), lr, c1, c2, config);
        update(p.bias.values(), g.bias.values(), m.bias.values(), v.bias.values(), lr, c1, c2, config);
    }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, const AdamConfig& config) {
    adam_step(params, grads, state, lr, LayerRange{1, params.depth()}, config);
}

}  // namespace fedd2s
