#include "fedd2s/baselines.hpp"
#include "fedd2s/errors.hpp"
#include "fedd2s/protocol.hpp"

namespace fedd2s {

Dataset load_run_dataset(const RunConfig& cfg) {
    const auto& source = cfg.dataset;
    if (source == "blobs") {
        return synth_blobs(cfg.blob_classes, cfg.blob_per_class, cfg.blob_dims, cfg.blob_separation,
                           derive_seed(cfg.seed, Stream::data));
    }
    if (source.starts_with("csv:")) return load_csv(source.substr(4));
    if (source.starts_with("idx:")) {
        const auto rest = source.substr(4);
        const auto comma = rest.find(',');
        if (comma == std::string::npos) throw ConfigError("idx dataset needs 'idx:<images>,<labels>'");
        return load_idx(rest.substr(0, comma), rest.substr(comma + 1));
    }
    throw ConfigError("unknown dataset source '" + source + "' (expected blobs, csv:<path> or idx:<images>,<labels>)");
}

Federation build_federation(const RunConfig& cfg, const Dataset& data) {
    data.validate();
    Federation fed;
    fed.spec = build_architecture(cfg.architecture, data.sample_shape(), data.num_classes);
    fed.server.global = ModelParams::he_uniform(fed.spec, derive_seed(cfg.seed, Stream::global_init));
    const auto plan = dirichlet_partition(data, cfg.clients, cfg.alpha, derive_seed(cfg.seed, Stream::partition));
    for (std::size_t n = 0; n < cfg.clients; ++n) {
        ClientState c;
        c.id = n;
        c.model = cfg.shared_init ? fed.server.global
                                  : ModelParams::he_uniform(fed.spec, derive_seed(cfg.seed, Stream::client_init, {n}));
        c.split = train_test_split(data.subset(plan.clients[n]), derive_seed(cfg.seed, Stream::split, {n}));
        c.optimizer = AdamState::for_model(fed.spec);
        fed.clients.push_back(std::move(c));
    }
    return fed;
}

MetricsLog run_training(const RunConfig& cfg) { return run_training(cfg, load_run_dataset(cfg)); }

MetricsLog run_training(const RunConfig& cfg, const Dataset& data) {
    const auto spec = build_architecture(cfg.architecture, data.sample_shape(), data.num_classes);
    MetricsLog log;
    log.config = resolve_config(cfg, spec);
    const auto& rc = log.config;

    auto fed = build_federation(rc, data);
    if (rc.protocol == Protocol::fedavg) {
        for (auto& c : fed.clients) c.model = fed.server.global;
    }
    const auto drop = DropConfig::from_names(spec, rc.drop_set, *rc.z0);
    std::size_t fixed = 0;
    if (rc.protocol == Protocol::fedd2s_fixed_layer) fixed = *spec.find_layer(rc.fixed_layer);

    RoundRecord initial;
    initial.clients = evaluate_clients(fed);
    log.rounds.push_back(std::move(initial));

    for (std::size_t r = 1; r <= rc.rounds; ++r) {
        try {
            switch (rc.protocol) {
                case Protocol::fedd2s: log.rounds.push_back(run_round(fed, rc, drop, r)); break;
                case Protocol::fedd2s_fixed_layer: log.rounds.push_back(fixed_layer_round(fed, rc, drop, fixed, r)); break;
                case Protocol::fedd2s_mse: log.rounds.push_back(mse_variant_round(fed, rc, drop, r)); break;
                case Protocol::fedavg: log.rounds.push_back(fedavg_round(fed, rc, r)); break;
                case Protocol::local_only: log.rounds.push_back(local_only_round(fed, rc, r)); break;
            }
        } catch (const Error& e) {
            throw ProtocolError("round " + std::to_string(r) + ": " + e.what());
        }
    }
    return log;
}

}  // namespace fedd2s
