#include "fedd2s/baselines.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fedd2s;

namespace {

RunConfig base_config(std::size_t clients, double rho) {
    RunConfig cfg;
    cfg.architecture = "desk";
    cfg.blob_classes = 3;
    cfg.blob_per_class = 30;
    cfg.blob_dims = 16;
    cfg.clients = clients;
    cfg.participation = rho;
    cfg.rounds = 4;
    cfg.epochs = 2;
    cfg.batch_size = 10;
    cfg.alpha = 0.5;
    cfg.ua_window = 2;
    cfg.seed = 23;
    return cfg;
}

struct Setup {
    RunConfig cfg;
    Federation fed;
};

Setup make_setup(RunConfig cfg) {
    const auto data = load_run_dataset(cfg);
    const auto spec = build_architecture(cfg.architecture, data.sample_shape(), data.num_classes);
    cfg = resolve_config(cfg, spec);
    return {cfg, build_federation(cfg, data)};
}

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
    double worst = 0.0;
    for (std::size_t l = 0; l < a.blocks().size(); ++l) {
        const auto& x = a.blocks()[l];
        const auto& y = b.blocks()[l];
        for (std::size_t i = 0; i < x.weight.size(); ++i) worst = std::max(worst, std::abs(x.weight[i] - y.weight[i]));
        for (std::size_t i = 0; i < x.bias.size(); ++i) worst = std::max(worst, std::abs(x.bias[i] - y.bias[i]));
    }
    return worst;
}

}  // namespace

TEST(FedAvg, SingleClientEqualsCentralizedTraining) {
    auto s = make_setup(base_config(1, 1.0));
    const auto& spec = s.fed.spec;
    auto central = s.fed.server.global;
    auto opt = AdamState::for_model(spec);
    const auto& client = s.fed.clients[0];
    for (std::size_t r = 1; r <= s.cfg.rounds; ++r) {
        fedavg_round(s.fed, s.cfg, r);
        for (std::size_t e = 0; e < s.cfg.epochs; ++e) {
            for (const auto& b : client_batches(s.cfg, client, r, e)) {
                const auto trace = trace_range(spec, central, b.x, 0, spec.depth());
                const auto ce = cross_entropy_with_grad(trace.output(), b.y, s.cfg.temperature);
                adam_step(central, backward(spec, central, trace, ce.grad, LayerRange::all(spec)).grads, opt, s.cfg.lr);
            }
        }
        EXPECT_LE(max_abs_diff(s.fed.server.global, central), 1e-12) << "round " << r;
    }
}

TEST(FedAvg, IdenticalClientsMatchOneClient) {
    auto s = make_setup(base_config(3, 1.0));
    // Same data and same batch stream for every client: the mean equals any single update.
    auto solo = s.fed.clients[0];
    solo.model = s.fed.server.global;
    for (auto& c : s.fed.clients) {
        c.split = solo.split;
        c.id = 0;
    }
    fedavg_round(s.fed, s.cfg, 1);
    for (std::size_t e = 0; e < s.cfg.epochs; ++e) {
        for (const auto& b : client_batches(s.cfg, solo, 1, e)) {
            ce_step(s.fed.spec, solo.model, solo.optimizer, b, s.cfg.temperature, s.cfg.lr);
        }
    }
    EXPECT_LE(max_abs_diff(s.fed.server.global, solo.model), 1e-12);
}

TEST(FedAvg, AllClientsAdoptGlobalAndParticipationCounts) {
    auto s = make_setup(base_config(5, 0.4));
    const auto rec = fedavg_round(s.fed, s.cfg, 1);
    EXPECT_EQ(rec.selected.size(), 2u);
    std::size_t total = 0;
    for (const auto& c : s.fed.clients) {
        EXPECT_EQ(c.model, s.fed.server.global);
        total += c.participation;
    }
    EXPECT_EQ(total, 2u);
    for (const auto& c : rec.clients) EXPECT_EQ(c.distill_layer, 0u);
}

TEST(FixedLayer, DeepestLayerWithoutDroppingMatchesFedD2S) {
    auto cfg = base_config(4, 0.5);
    cfg.z0 = kNeverDrop;
    cfg.drop_set = {"F3"};
    cfg.protocol = Protocol::fedd2s;
    const auto scheduled = run_training(cfg);
    cfg.protocol = Protocol::fedd2s_fixed_layer;
    cfg.fixed_layer = "F3";
    const auto fixed = run_training(cfg);
    EXPECT_EQ(scheduled.rounds, fixed.rounds);
}

TEST(FixedLayer, LogsAConstantLayer) {
    auto cfg = base_config(4, 1.0);
    cfg.protocol = Protocol::fedd2s_fixed_layer;
    cfg.z0 = 1;
    const auto log = run_training(cfg);
    EXPECT_EQ(log.config.fixed_layer, "C3");
    for (std::size_t r = 1; r < log.rounds.size(); ++r) {
        for (const auto& c : log.rounds[r].clients) EXPECT_EQ(c.distill_layer, 3u);
    }
}

TEST(FedD2S, ScheduledLayersFollowParticipation) {
    auto cfg = base_config(4, 1.0);
    cfg.z0 = 1;
    const auto log = run_training(cfg);
    const std::vector<std::size_t> expected{7, 6, 5, 3};
    for (std::size_t r = 1; r < log.rounds.size(); ++r) {
        for (const auto& c : log.rounds[r].clients) EXPECT_EQ(c.distill_layer, expected[r - 1]);
    }
}

TEST(LocalOnly, IgnoresParticipationRatio) {
    auto cfg = base_config(4, 0.25);
    cfg.protocol = Protocol::local_only;
    const auto a = run_training(cfg);
    cfg.participation = 1.0;
    const auto b = run_training(cfg);
    EXPECT_EQ(a.rounds, b.rounds);
    for (std::size_t r = 1; r < a.rounds.size(); ++r) EXPECT_EQ(a.rounds[r].selected.size(), 4u);
}

TEST(LocalOnly, ClientsNeverInteract) {
    auto s = make_setup(base_config(3, 1.0));
    auto alone = make_setup(base_config(3, 1.0));
    // Perturbing one client must leave the others untouched.
    alone.fed.clients[0].model = ModelParams::he_uniform(alone.fed.spec, 99);
    for (std::size_t r = 1; r <= 2; ++r) {
        local_only_round(s.fed, s.cfg, r);
        local_only_round(alone.fed, alone.cfg, r);
    }
    EXPECT_NE(s.fed.clients[0].model, alone.fed.clients[0].model);
    EXPECT_EQ(s.fed.clients[1].model, alone.fed.clients[1].model);
    EXPECT_EQ(s.fed.clients[2].model, alone.fed.clients[2].model);
}

TEST(MseVariant, ZeroDistanceAtIdenticalModels) {
    auto s = make_setup(base_config(2, 1.0));
    const auto& spec = s.fed.spec;
    const auto l = *spec.find_layer("C3");
    const auto& c = s.fed.clients[0];
    ASSERT_EQ(c.model, s.fed.server.global);
    DistillOptions o;
    o.distance = Distance::feature_mse;
    for (const auto& b : client_batches(s.cfg, c, 1, 0)) {
        const auto t = extract_local_knowledge(spec, c.model, b, l);
        const auto c2s = c2s_distill_objective(spec, s.fed.server.global, t, o);
        EXPECT_EQ(c2s.value, 0.0);
        EXPECT_EQ(c2s.grads, ModelParams::zeros(spec));
        const auto target = s2c_feature_targets(spec, s.fed.server.global, std::span(&t, 1)).front();
        const auto s2c = s2c_distill_objective(spec, c.model, s.fed.server.global, b.x, target, l, o);
        EXPECT_EQ(s2c.value, 0.0);
        EXPECT_EQ(s2c.grads, ModelParams::zeros(spec));
    }
}

TEST(MseVariant, RunsAndLogsSchedule) {
    auto cfg = base_config(4, 1.0);
    cfg.protocol = Protocol::fedd2s_mse;
    cfg.z0 = 1;
    const auto log = run_training(cfg);
    ASSERT_EQ(log.rounds.size(), cfg.rounds + 1);
    EXPECT_EQ(log.rounds[1].clients[0].distill_layer, 7u);
    EXPECT_EQ(log.rounds[4].clients[0].distill_layer, 3u);
    for (const auto& r : log.rounds) {
        for (const auto& c : r.clients) EXPECT_TRUE(std::isfinite(c.loss_kl));
    }
}
