#pragma once

#include "fedd2s/model.hpp"

#include <cstdint>

namespace fedd2s {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators shaped like the parameters they update.
struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step = 0;

    static AdamState for_model(const ModelSpec& spec);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Only layers inside `range` (and their
/// moments) are touched; the step counter advances by one regardless.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, LayerRange range,
               const AdamConfig& config = {});

/// Convenience overload updating every layer.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

}  // namespace fedd2s
