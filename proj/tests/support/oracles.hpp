#pragma once

// Independent reference computations shared by the unit and acceptance suites.

#include "fedd2s/losses.hpp"
#include "fedd2s/model.hpp"
#include "fedd2s/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fedd2s::oracle {

// Counts schedule advances one participation at a time (every Z0-th step
// moves one entry shallower), then clamps at the last entry.
inline std::size_t schedule_brute_force(std::size_t z, std::size_t z0, const std::vector<std::size_t>& deep_to_shallow) {
    std::size_t steps = 0;
    for (std::size_t k = 1; k < z; ++k) {
        if (k % z0 == 0) ++steps;
    }
    const std::size_t idx = std::min(steps, deep_to_shallow.size() - 1);
    return deep_to_shallow[idx];
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

inline Labels random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::uniform_int_distribution<int> u(0, static_cast<int>(classes) - 1);
    Labels y(n);
    for (auto& v : y) v = u(rng);
    return y;
}

// Small mixed conv/dense stack with at most `max_params` parameters.
inline ModelSpec random_spec(Rng& rng, std::size_t max_params = 2000) {
    std::uniform_int_distribution<std::size_t> side(3, 6), chans(1, 3), convs(0, 2), denses(1, 3), width(2, 6),
        classes(2, 5), kernel(1, 3), stride(1, 2), pad(0, 1);
    for (;;) {
        Shape in{side(rng), side(rng), chans(rng)};
        std::vector<LayerSpec> layers;
        std::size_t h = in[0], w = in[1];
        const auto n_conv = convs(rng);
        bool ok = true;
        for (std::size_t i = 0; i < n_conv; ++i) {
            const auto k = kernel(rng), s = stride(rng), p = pad(rng);
            if (h + 2 * p < k || w + 2 * p < k) {
                ok = false;
                break;
            }
            h = (h + 2 * p - k) / s + 1;
            w = (w + 2 * p - k) / s + 1;
            layers.push_back(LayerSpec::conv(chans(rng) + 1, k, s, p));
        }
        if (!ok) continue;
        layers.push_back(LayerSpec::flat());
        const auto n_dense = denses(rng);
        for (std::size_t i = 0; i + 1 < n_dense; ++i) layers.push_back(LayerSpec::dense(width(rng)));
        layers.push_back(LayerSpec::dense(classes(rng), Activation::none));
        ModelSpec spec(in, layers);
        if (spec.parameter_count() <= max_params) return spec;
    }
}

// Parameters with nonzero biases so that every code path carries signal.
inline ModelParams random_params(const ModelSpec& spec, Rng& rng) {
    auto params = ModelParams::he_uniform(spec, rng());
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& b : params.blocks()) {
        for (auto& v : b.bias.values()) v = u(rng);
    }
    return params;
}

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

inline constexpr double kGradFloor = 1e-6;

struct GradCheck {
    std::size_t checked = 0;
    std::size_t kinks = 0;     // parameters whose perturbation crossed a ReLU boundary
    std::size_t relative = 0;  // parameters with gradient magnitude >= kGradFloor
    double worst_rel = 0.0;
    std::string worst_where;
};

// Compares analytic gradients against finite differences of `loss_value`,
// a function of the full-model logits. Perturbations that change any ReLU
// on/off pattern straddle a non-differentiable point and are retried with a
// smaller step, then skipped and counted.
inline GradCheck check_gradients(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
                                 const std::function<double(const Tensor&)>& loss_value, const ModelParams& analytic,
                                 double step = 1e-4) {
    auto evaluate = [&](const ModelParams& p, std::vector<bool>* pattern) {
        const auto trace = trace_range(spec, p, x, 0, spec.depth());
        if (pattern) {
            pattern->clear();
            for (std::size_t k = 1; k + 1 < trace.acts.size(); ++k) {
                for (double v : trace.acts[k].values()) pattern->push_back(v > 0.0);
            }
        }
        return loss_value(trace.output());
    };
    GradCheck out;
    auto probe = params;
    std::vector<bool> plus_pattern, minus_pattern;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        if (!spec.layer(l).has_params()) continue;
        for (int which = 0; which < 2; ++which) {
            auto& target = which == 0 ? probe.block(l).weight : probe.block(l).bias;
            const auto& grad = which == 0 ? analytic.block(l).weight : analytic.block(l).bias;
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double saved = target[i];
                double h = step, numeric = 0.0;
                bool smooth = false;
                // Five-point stencil, fourth-order accurate; all four probes must share one ReLU pattern.
                for (int attempt = 0; attempt < 2 && !smooth; ++attempt, h *= 1e-2) {
                    double f[4];
                    const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
                    smooth = true;
                    for (int k = 0; k < 4; ++k) {
                        target[i] = saved + offsets[k] * h;
                        f[k] = evaluate(probe, k == 0 ? &plus_pattern : &minus_pattern);
                        if (k > 0) smooth = smooth && plus_pattern == minus_pattern;
                    }
                    target[i] = saved;
                    numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
                }
                if (!smooth) {
                    ++out.kinks;
                    continue;
                }
                ++out.checked;
                const double a = grad[i];
                const double diff = std::abs(a - numeric);
                const double scale = std::max(std::abs(a), std::abs(numeric));
                // Relative error. Below kGradFloor the finite differences are dominated by
                // round-off (~1e-12), so the comparison there is effectively absolute.
                const double rel = diff / std::max(scale, kGradFloor);
                if (scale >= kGradFloor) ++out.relative;
                if (rel > out.worst_rel) {
                    out.worst_rel = rel;
                    out.worst_where = spec.layer_name(l) + (which == 0 ? ".weight[" : ".bias[") + std::to_string(i) +
                                      "] analytic " + sci(a) + " numeric " + sci(numeric);
                }
            }
        }
    }
    return out;
}

enum class LossKind { ce, kl, mse };

// Analytic gradient and an independent value function for one loss kind.
// KL targets are random teacher distributions; MSE targets are random logits.
struct LossCase {
    ModelParams analytic;
    std::function<double(const Tensor&)> value;
};

inline LossCase make_loss_case(const ModelSpec& spec, const ModelParams& params, const Tensor& x, LossKind kind,
                               double tau, Rng& rng) {
    const auto trace = trace_range(spec, params, x, 0, spec.depth());
    const auto& logits = trace.output();
    LossCase c;
    Tensor out_grad;
    if (kind == LossKind::ce) {
        const auto y = random_labels(x.rows(), spec.num_classes(), rng);
        out_grad = cross_entropy_with_grad(logits, y, tau).grad;
        c.value = [y, tau](const Tensor& z) { return cross_entropy(z, y, tau); };
    } else if (kind == LossKind::kl) {
        const auto teacher = tempered_softmax(random_tensor(logits.shape(), rng, -3.0, 3.0), tau);
        out_grad = distillation_loss(logits, teacher, tau).grad;
        c.value = [teacher, tau](const Tensor& z) {
            return tau * tau * kl_divergence(tempered_softmax(z, tau), teacher);
        };
    } else {
        const auto target = random_tensor(logits.shape(), rng);
        out_grad = mse_with_grad(logits, target).grad;
        c.value = [target](const Tensor& z) { return mse(z, target); };
    }
    c.analytic = backward(spec, params, trace, out_grad, LayerRange::all(spec)).grads;
    return c;
}

}  // namespace fedd2s::oracle
