#pragma once

#include "fedd2s/adam.hpp"
#include "fedd2s/config.hpp"
#include "fedd2s/data.hpp"
#include "fedd2s/losses.hpp"
#include "fedd2s/metrics.hpp"
#include "fedd2s/model.hpp"
#include "fedd2s/rng.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace fedd2s {

// ---------------------------------------------------------------------------
// Layer-dropping schedule

/// Eligible distillation boundaries, stored deepest first, and the number of
/// participations each boundary stays active (Z0).
class DropConfig {
public:
    /// `layers` may come in any order; they are sorted deep-to-shallow.
    /// Throws ConfigError for an empty set, duplicates, flatten layers or
    /// indices outside the architecture.
    DropConfig(const ModelSpec& spec, std::vector<std::size_t> layers, std::size_t rate);
    static DropConfig from_names(const ModelSpec& spec, const std::vector<std::string>& names, std::size_t rate);

    const std::vector<std::size_t>& layers() const noexcept { return layers_; }
    std::size_t rate() const noexcept { return rate_; }

private:
    std::vector<std::size_t> layers_;
    std::size_t rate_;
};

/// Boundary for a client selected `participation` times (>= 1): entry
/// floor((Z - 1) / Z0) of the deep-to-shallow set, clamped at the shallowest.
std::size_t distillation_layer(std::size_t participation, const DropConfig& cfg);

// ---------------------------------------------------------------------------
// Parties and exchanged knowledge

struct ClientState {
    std::size_t id = 0;
    ModelParams model;
    ClientSplit split;
    std::size_t participation = 0;
    AdamState optimizer;
};

struct ServerState {
    ModelParams global;
    std::map<std::size_t, ModelParams> staged;  // only alive between C2S and aggregation
    std::size_t round = 0;
};

/// Raw local batch kept on the client alongside what it transmits.
struct LocalBatch {
    Tensor x;
    Labels y;
};

struct KnowledgeTriplet {
    Tensor h1;  // first-layer output
    Tensor hl;  // distillation-layer output
    Labels labels;
    std::size_t layer = 0;
};

/// p, q: head-mapped local and global-path labels seen by the server before
/// it updates; v, t: the same two after aggregation.
struct SoftLabelSet {
    Tensor p;
    Tensor q;
    Tensor v;
    Tensor t;
};

enum class Distance { head_kl, feature_mse };

struct DistillOptions {
    double tau = 1.0;
    double lr = 0.01;
    std::size_t epochs = 1;
    KlOrder kl_order = KlOrder::teacher_student;
    Distance distance = Distance::head_kl;
};

struct StageLosses {
    double distill = 0.0;
    double ce = 0.0;
};

/// Uniform subset of round(rho N) clients (at least one), ascending by id.
/// Each selected client's participation count is incremented.
std::vector<std::size_t> select_clients(std::vector<ClientState>& clients, double rho, Rng& rng);

/// (H1, H_l, Y) from the client's current parameters; nothing is recorded for backprop.
KnowledgeTriplet extract_local_knowledge(const ModelSpec& spec, const ModelParams& local, const LocalBatch& batch,
                                         std::size_t layer);

/// tau^2 KL between the staged global model's output on H1 (student) and the
/// staged head applied to H_l (teacher, no gradient), or the per-element MSE
/// between the global layer-l features computed from H1 and H_l when
/// opts.distance is feature_mse. Returns the loss and its gradient w.r.t. the
/// staged parameters (layer 1 never receives gradient).
struct ObjectiveGrad {
    double value = 0.0;
    ModelParams grads;
};
ObjectiveGrad c2s_distill_objective(const ModelSpec& spec, const ModelParams& staged, const KnowledgeTriplet& triplet,
                                    const DistillOptions& opts);

/// Clients-to-server distillation of one client's triplets into its staged
/// copy: per triplet an Adam step on the distillation objective, then an Adam
/// step on cross-entropy of the global path from H1. Repeated opts.epochs times.
/// When `record` is given it receives p and q per triplet from the first epoch.
StageLosses c2s_distill(const ModelSpec& spec, ModelParams& staged, std::span<const KnowledgeTriplet> triplets,
                        const DistillOptions& opts, AdamState& optimizer, std::vector<SoftLabelSet>* record = nullptr);

/// Element-wise mean of the staged copies, summed in the given order.
ModelParams aggregate_globals(std::span<const ModelParams> staged);

/// v and t for every triplet from the aggregated global model.
std::vector<SoftLabelSet> s2c_targets(const ModelSpec& spec, const ModelParams& global,
                                      std::span<const KnowledgeTriplet> triplets, double tau);

/// Global-side layer-l features from the transmitted H1 (feature_mse targets).
std::vector<Tensor> s2c_feature_targets(const ModelSpec& spec, const ModelParams& global,
                                        std::span<const KnowledgeTriplet> triplets);

/// Gradient of the client distillation objective w.r.t. the local prefix
/// 1..layer. Head-KL: tau^2 KL(t || global head on local H_l); feature-MSE:
/// mse(local H_l, target). The global head is read-only.
ObjectiveGrad s2c_distill_objective(const ModelSpec& spec, const ModelParams& local, const ModelParams& global,
                                    const Tensor& x, const Tensor& target, std::size_t layer,
                                    const DistillOptions& opts);

/// Server-to-client distillation: per batch an Adam step on the local prefix
/// for the distillation objective, then an Adam step on the whole local model
/// for cross-entropy. `targets[i]` is t (head_kl) or the feature target (feature_mse).
StageLosses s2c_distill(const ModelSpec& spec, ModelParams& local, AdamState& optimizer,
                        std::span<const LocalBatch> batches, std::span<const Tensor> targets,
                        const ModelParams& global, std::size_t layer, const DistillOptions& opts);

/// One Adam step of cross-entropy on the full model; returns the loss before the step.
double ce_step(const ModelSpec& spec, ModelParams& params, AdamState& optimizer, const LocalBatch& batch, double tau,
               double lr);

double accuracy(const ModelSpec& spec, const ModelParams& params, const Dataset& ds);

// ---------------------------------------------------------------------------
// Simulation state and rounds

struct Federation {
    ModelSpec spec;
    ServerState server;
    std::vector<ClientState> clients;
};

/// Partitions `data` across cfg.clients, splits every client 80/20 and
/// initializes the global and local models from the run seed. `cfg` must be resolved.
Federation build_federation(const RunConfig& cfg, const Dataset& data);

/// Dataset described by cfg.dataset (synthetic blobs, CSV or IDX).
Dataset load_run_dataset(const RunConfig& cfg);

/// Local batches of client `client` for (round, epoch) in a named phase.
std::vector<LocalBatch> client_batches(const RunConfig& cfg, const ClientState& client, std::size_t round,
                                       std::size_t epoch, std::uint64_t phase = 0);

/// Test accuracy of every client, ordered by id.
std::vector<ClientRecord> evaluate_clients(const Federation& fed);

/// How a FedD2S-style round picks the boundary and compares knowledge.
struct RoundVariant {
    std::optional<std::size_t> fixed_layer;  // constant boundary instead of the schedule
    Distance distance = Distance::head_kl;
};

/// One FedD2S round: selection, schedule, extraction, clients-to-server
/// distillation, aggregation, server-to-clients distillation, evaluation.
RoundRecord run_round(Federation& fed, const RunConfig& cfg, const DropConfig& drop, std::size_t round,
                      const RoundVariant& variant = {});

/// Runs round 0 evaluation plus cfg.rounds rounds of cfg.protocol.
MetricsLog run_training(const RunConfig& cfg);
MetricsLog run_training(const RunConfig& cfg, const Dataset& data);

}  // namespace fedd2s
