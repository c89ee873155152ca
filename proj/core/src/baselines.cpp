#include "fedd2s/baselines.hpp"

#include <chrono>

namespace fedd2s {

namespace {

double local_training(const Federation& fed, ClientState& client, const RunConfig& cfg, std::size_t round) {
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        for (const auto& b : client_batches(cfg, client, round, e)) {
            total += ce_step(fed.spec, client.model, client.optimizer, b, cfg.temperature, cfg.lr);
            ++steps;
        }
    }
    return steps ? total / static_cast<double>(steps) : 0.0;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RoundRecord fedavg_round(Federation& fed, const RunConfig& cfg, std::size_t round) {
    const auto started = std::chrono::steady_clock::now();
    Rng select_rng(derive_seed(cfg.seed, Stream::selection, {round}));
    const auto selected = select_clients(fed.clients, cfg.participation, select_rng);
    fed.server.round = round;

    std::vector<double> ce(fed.clients.size(), 0.0);
    std::vector<ModelParams> trained;
    trained.reserve(selected.size());
    for (auto id : selected) {
        auto& client = fed.clients[id];
        client.model = fed.server.global;
        ce[id] = local_training(fed, client, cfg, round);
        trained.push_back(client.model);
    }
    fed.server.global = aggregate_globals(trained);
    for (auto& client : fed.clients) client.model = fed.server.global;

    RoundRecord record;
    record.round = round;
    record.selected = selected;
    record.clients = evaluate_clients(fed);
    for (auto id : selected) {
        record.clients[id].selected = true;
        record.clients[id].loss_ce = ce[id];
    }
    if (cfg.record_wall_clock) record.wall_clock_s = seconds_since(started);
    return record;
}

RoundRecord local_only_round(Federation& fed, const RunConfig& cfg, std::size_t round) {
    const auto started = std::chrono::steady_clock::now();
    RoundRecord record;
    record.round = round;
    std::vector<double> ce;
    for (auto& client : fed.clients) {
        ++client.participation;
        record.selected.push_back(client.id);
        ce.push_back(local_training(fed, client, cfg, round));
    }
    record.clients = evaluate_clients(fed);
    for (auto& c : record.clients) {
        c.selected = true;
        c.loss_ce = ce[c.client_id];
    }
    if (cfg.record_wall_clock) record.wall_clock_s = seconds_since(started);
    return record;
}

RoundRecord fixed_layer_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t layer,
                              std::size_t round) {
    RoundVariant variant;
    variant.fixed_layer = layer;
    return run_round(fed, cfg, drop, round, variant);
}

RoundRecord mse_variant_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t round) {
    RoundVariant variant;
    variant.distance = Distance::feature_mse;
    return run_round(fed, cfg, drop, round, variant);
}

}  // namespace fedd2s
