#include "fedd2s/protocol.hpp"

#include "fedd2s/errors.hpp"
#include "fedd2s/wire.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace fedd2s {

std::vector<std::size_t> select_clients(std::vector<ClientState>& clients, double rho, Rng& rng) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ArgumentError("participation ratio must lie in (0, 1]");
    if (clients.empty()) throw ArgumentError("no clients to select from");
    const auto n = clients.size();
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(rho * static_cast<double>(n))), 1, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first k slots are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    for (auto i : order) ++clients[i].participation;
    return order;
}

namespace {

void check_triplet(const ModelSpec& spec, const KnowledgeTriplet& t) {
    if (t.layer < 1 || t.layer > spec.depth()) {
        throw ProtocolError("triplet distillation layer " + std::to_string(t.layer) + " outside the architecture");
    }
    auto matches = [](const Tensor& x, const Shape& sample, std::size_t batch) {
        return x.rank() == sample.size() + 1 && x.rows() == batch &&
               std::equal(sample.begin(), sample.end(), x.shape().begin() + 1);
    };
    const auto batch = t.labels.size();
    if (batch == 0) throw ProtocolError("triplet carries no samples");
    if (!matches(t.h1, spec.output_shape(1), batch)) {
        throw ProtocolError("triplet H1 shape " + shape_string(t.h1.shape()) + " does not match layer 1 output");
    }
    if (!matches(t.hl, spec.output_shape(t.layer), batch)) {
        throw ProtocolError("triplet H_l shape " + shape_string(t.hl.shape()) + " does not match layer " +
                            std::to_string(t.layer) + " output");
    }
}

LayerRange server_range(const ModelSpec& spec) { return {2, spec.depth()}; }

}  // namespace

KnowledgeTriplet extract_local_knowledge(const ModelSpec& spec, const ModelParams& local, const LocalBatch& batch,
                                         std::size_t layer) {
    if (layer < 1 || layer > spec.depth()) throw ArgumentError("distillation layer out of range");
    KnowledgeTriplet t;
    t.h1 = forward_prefix(spec, local, batch.x, 1);
    t.hl = forward_range(spec, local, t.h1, 1, layer);
    t.labels = batch.y;
    t.layer = layer;
    return t;
}

ObjectiveGrad c2s_distill_objective(const ModelSpec& spec, const ModelParams& staged, const KnowledgeTriplet& triplet,
                                    const DistillOptions& opts) {
    check_triplet(spec, triplet);
    const auto depth = spec.depth();
    const auto l = triplet.layer;
    if (opts.distance == Distance::feature_mse) {
        const auto trace = trace_range(spec, staged, triplet.h1, 1, l);
        auto loss = mse_with_grad(trace.output(), triplet.hl);
        auto back = backward(spec, staged, trace, loss.grad, {2, l});
        return {loss.value, std::move(back.grads)};
    }
    // Teacher: staged head on the client's features, treated as a constant.
    const auto teacher = tempered_softmax(forward_range(spec, staged, triplet.hl, l, depth), opts.tau);
    const auto trace = trace_range(spec, staged, triplet.h1, 1, depth);
    auto loss = distillation_loss(trace.output(), teacher, opts.tau, opts.kl_order);
    auto back = backward(spec, staged, trace, loss.grad, server_range(spec));
    return {loss.value, std::move(back.grads)};
}

StageLosses c2s_distill(const ModelSpec& spec, ModelParams& staged, std::span<const KnowledgeTriplet> triplets,
                        const DistillOptions& opts, AdamState& optimizer, std::vector<SoftLabelSet>* record) {
    StageLosses losses;
    std::size_t steps = 0;
    const auto range = server_range(spec);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (const auto& t : triplets) {
            if (record && epoch == 0 && opts.distance == Distance::head_kl) {
                SoftLabelSet s;
                s.p = tempered_softmax(forward_range(spec, staged, t.hl, t.layer, spec.depth()), opts.tau);
                s.q = tempered_softmax(forward_range(spec, staged, t.h1, 1, spec.depth()), opts.tau);
                record->push_back(std::move(s));
            }
            auto objective = c2s_distill_objective(spec, staged, t, opts);
            adam_step(staged, objective.grads, optimizer, opts.lr, range);

            const auto trace = trace_range(spec, staged, t.h1, 1, spec.depth());
            auto ce = cross_entropy_with_grad(trace.output(), t.labels, opts.tau);
            auto back = backward(spec, staged, trace, ce.grad, range);
            adam_step(staged, back.grads, optimizer, opts.lr, range);

            losses.distill += objective.value;
            losses.ce += ce.value;
            ++steps;
        }
    }
    if (steps) {
        losses.distill /= static_cast<double>(steps);
        losses.ce /= static_cast<double>(steps);
    }
    return losses;
}

ModelParams aggregate_globals(std::span<const ModelParams> staged) {
    if (staged.empty()) throw ProtocolError("cannot aggregate an empty set of models");
    ModelParams mean = staged.front();
    for (std::size_t i = 1; i < staged.size(); ++i) {
        if (!staged[i].same_shape(mean)) throw ProtocolError("staged models have different shapes");
    }
    const double scale = 1.0 / static_cast<double>(staged.size());
    for (std::size_t b = 0; b < mean.blocks().size(); ++b) {
        for (auto member : {&ParamBlock::weight, &ParamBlock::bias}) {
            auto dst = (mean.blocks()[b].*member).values();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                double total = 0.0;
                for (const auto& m : staged) total += (m.blocks()[b].*member)[i];
                dst[i] = total * scale;
            }
        }
    }
    return mean;
}

std::vector<SoftLabelSet> s2c_targets(const ModelSpec& spec, const ModelParams& global,
                                      std::span<const KnowledgeTriplet> triplets, double tau) {
    std::vector<SoftLabelSet> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        check_triplet(spec, t);
        SoftLabelSet s;
        s.t = tempered_softmax(forward_range(spec, global, t.h1, 1, spec.depth()), tau);
        s.v = tempered_softmax(forward_range(spec, global, t.hl, t.layer, spec.depth()), tau);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tensor> s2c_feature_targets(const ModelSpec& spec, const ModelParams& global,
                                        std::span<const KnowledgeTriplet> triplets) {
    std::vector<Tensor> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        check_triplet(spec, t);
        out.push_back(forward_range(spec, global, t.h1, 1, t.layer));
    }
    return out;
}

ObjectiveGrad s2c_distill_objective(const ModelSpec& spec, const ModelParams& local, const ModelParams& global,
                                    const Tensor& x, const Tensor& target, std::size_t layer,
                                    const DistillOptions& opts) {
    if (layer < 1 || layer > spec.depth()) throw ArgumentError("distillation layer out of range");
    const auto prefix = trace_range(spec, local, x, 0, layer);
    if (opts.distance == Distance::feature_mse) {
        if (target.shape() != prefix.output().shape()) {
            throw ProtocolError("feature target shape " + shape_string(target.shape()) + " does not match layer " +
                                std::to_string(layer) + " output " + shape_string(prefix.output().shape()));
        }
        auto loss = mse_with_grad(prefix.output(), target);
        auto back = backward(spec, local, prefix, loss.grad, {1, layer});
        return {loss.value, std::move(back.grads)};
    }
    // Global head is frozen: it only routes the gradient back to the local features.
    const auto head = trace_range(spec, global, prefix.output(), layer, spec.depth());
    auto loss = distillation_loss(head.output(), target, opts.tau, opts.kl_order);
    const auto through_head = backward(spec, global, head, loss.grad, LayerRange::none());
    auto back = backward(spec, local, prefix, through_head.input_grad, {1, layer});
    return {loss.value, std::move(back.grads)};
}

double ce_step(const ModelSpec& spec, ModelParams& params, AdamState& optimizer, const LocalBatch& batch, double tau,
               double lr) {
    const auto trace = trace_range(spec, params, batch.x, 0, spec.depth());
    auto ce = cross_entropy_with_grad(trace.output(), batch.y, tau);
    auto back = backward(spec, params, trace, ce.grad, LayerRange::all(spec));
    adam_step(params, back.grads, optimizer, lr);
    return ce.value;
}

StageLosses s2c_distill(const ModelSpec& spec, ModelParams& local, AdamState& optimizer,
                        std::span<const LocalBatch> batches, std::span<const Tensor> targets,
                        const ModelParams& global, std::size_t layer, const DistillOptions& opts) {
    if (batches.size() != targets.size()) throw ProtocolError("one distillation target per local batch is required");
    StageLosses losses;
    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = 0; i < batches.size(); ++i) {
            auto objective = s2c_distill_objective(spec, local, global, batches[i].x, targets[i], layer, opts);
            adam_step(local, objective.grads, optimizer, opts.lr, LayerRange{1, layer});
            losses.ce += ce_step(spec, local, optimizer, batches[i], opts.tau, opts.lr);
            losses.distill += objective.value;
            ++steps;
        }
    }
    if (steps) {
        losses.distill /= static_cast<double>(steps);
        losses.ce /= static_cast<double>(steps);
    }
    return losses;
}

double accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    const auto predicted = argmax_rows(forward(spec, params, ds.inputs));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (static_cast<std::int32_t>(predicted[i]) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<LocalBatch> client_batches(const RunConfig& cfg, const ClientState& client, std::size_t round,
                                       std::size_t epoch, std::uint64_t phase) {
    const auto& train = client.split.train;
    const auto seed = derive_seed(cfg.seed, Stream::batches, {client.id, round, phase});
    std::vector<LocalBatch> out;
    for (const auto& idx : batches(train.size(), cfg.batch_size, seed, epoch)) {
        auto sub = train.subset(idx);
        out.push_back({std::move(sub.inputs), std::move(sub.labels)});
    }
    return out;
}

std::vector<ClientRecord> evaluate_clients(const Federation& fed) {
    std::vector<ClientRecord> out;
    out.reserve(fed.clients.size());
    for (const auto& c : fed.clients) {
        ClientRecord r;
        r.client_id = c.id;
        r.test_acc = accuracy(fed.spec, c.model, c.split.test);
        out.push_back(r);
    }
    return out;
}

namespace {

std::size_t distill_epochs(const RunConfig& cfg) { return std::max<std::size_t>(1, cfg.epochs / 2); }

}  // namespace

RoundRecord run_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t round,
                      const RoundVariant& variant) {
    const auto started = std::chrono::steady_clock::now();
    const auto& spec = fed.spec;
    Rng select_rng(derive_seed(cfg.seed, Stream::selection, {round}));
    const auto selected = select_clients(fed.clients, cfg.participation, select_rng);

    DistillOptions opts;
    opts.tau = cfg.temperature;
    opts.lr = cfg.lr;
    opts.epochs = distill_epochs(cfg);
    opts.kl_order = cfg.kl_order;
    opts.distance = variant.distance;

    struct Work {
        std::size_t layer = 0;
        std::vector<LocalBatch> batches;
        std::vector<KnowledgeTriplet> triplets;
        StageLosses client_losses;
    };
    std::map<std::size_t, Work> work;

    // Schedule and local knowledge extraction.
    for (auto id : selected) {
        auto& client = fed.clients[id];
        auto& w = work[id];
        w.layer = variant.fixed_layer ? *variant.fixed_layer : distillation_layer(client.participation, drop);
        for (std::size_t e = 0; e < cfg.pre_local_epochs; ++e) {
            for (const auto& b : client_batches(cfg, client, round, e, 1)) {
                ce_step(spec, client.model, client.optimizer, b, cfg.temperature, cfg.lr);
            }
        }
        w.batches = client_batches(cfg, client, round, 0);
        for (const auto& b : w.batches) w.triplets.push_back(extract_local_knowledge(spec, client.model, b, w.layer));
        if (cfg.wire_roundtrip) {
            const auto bytes = encode_triplets(static_cast<std::uint32_t>(id), w.triplets);
            w.triplets = decode_triplets(bytes).triplets;
        }
    }

    // Clients-to-server: one staged copy of the global model per client.
    RoundRecord record;
    record.round = round;
    record.selected = selected;
    auto& server = fed.server;
    server.round = round;
    for (auto id : selected) {
        auto& staged = server.staged[id] = server.global;
        auto optimizer = AdamState::for_model(spec);
        const auto losses = c2s_distill(spec, staged, work[id].triplets, opts, optimizer);
        record.server_kl += losses.distill;
        record.server_ce += losses.ce;
    }
    record.server_kl /= static_cast<double>(selected.size());
    record.server_ce /= static_cast<double>(selected.size());

    std::vector<ModelParams> staged;
    staged.reserve(selected.size());
    for (auto id : selected) staged.push_back(std::move(server.staged.at(id)));
    server.staged.clear();
    server.global = aggregate_globals(staged);

    // Server-to-clients. Triplets are re-extracted at the start of every epoch
    // after the first, since the local model has moved by then.
    auto one_epoch = opts;
    one_epoch.epochs = 1;
    for (auto id : selected) {
        auto& client = fed.clients[id];
        auto& w = work[id];
        StageLosses total;
        for (std::size_t e = 0; e < opts.epochs; ++e) {
            if (e > 0) {
                w.batches = client_batches(cfg, client, round, e);
                w.triplets.clear();
                for (const auto& b : w.batches) {
                    w.triplets.push_back(extract_local_knowledge(spec, client.model, b, w.layer));
                }
            }
            std::vector<Tensor> targets;
            if (variant.distance == Distance::head_kl) {
                for (auto& s : s2c_targets(spec, server.global, w.triplets, cfg.temperature)) {
                    targets.push_back(std::move(s.t));
                }
            } else {
                targets = s2c_feature_targets(spec, server.global, w.triplets);
            }
            const auto losses =
                s2c_distill(spec, client.model, client.optimizer, w.batches, targets, server.global, w.layer, one_epoch);
            total.distill += losses.distill;
            total.ce += losses.ce;
        }
        w.client_losses = {total.distill / static_cast<double>(opts.epochs), total.ce / static_cast<double>(opts.epochs)};
    }

    record.clients = evaluate_clients(fed);
    for (auto& c : record.clients) {
        auto it = work.find(c.client_id);
        if (it == work.end()) continue;
        c.selected = true;
        c.distill_layer = it->second.layer;
        c.loss_kl = it->second.client_losses.distill;
        c.loss_ce = it->second.client_losses.ce;
    }
    if (cfg.record_wall_clock) {
        record.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return record;
}

}  // namespace fedd2s
