#pragma once

#include "fedd2s/protocol.hpp"

namespace fedd2s {

/// Selected clients start from the global model, train cfg.epochs epochs of
/// cross-entropy, and the server replaces the global model with their mean.
/// Every client then adopts the new global model.
RoundRecord fedavg_round(Federation& fed, const RunConfig& cfg, std::size_t round);

/// Every client trains cfg.epochs epochs on its own data; nothing is exchanged.
RoundRecord local_only_round(Federation& fed, const RunConfig& cfg, std::size_t round);

/// FedD2S with a constant distillation boundary.
RoundRecord fixed_layer_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t layer,
                              std::size_t round);

/// FedD2S with feature-space MSE in place of the head-model KL terms.
RoundRecord mse_variant_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t round);

}  // namespace fedd2s
