#pragma once

#include "fedd2s/losses.hpp"
#include "fedd2s/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedd2s {

enum class Protocol { fedd2s, fedd2s_fixed_layer, fedd2s_mse, fedavg, local_only };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

/// A dropping rate that never advances the schedule.
inline constexpr std::size_t kNeverDrop = std::numeric_limits<std::size_t>::max();

/// Everything that defines a run. Fields left unset are resolved by
/// `resolve_config` so that the metrics file always carries explicit values.
struct RunConfig {
    Protocol protocol = Protocol::fedd2s;
    std::string fixed_layer;  // layer name, fedd2s_fixed_layer only; default last conv (or first dense)

    std::size_t rounds = 100;
    std::size_t clients = 50;
    double participation = 0.2;
    std::size_t epochs = 4;
    std::size_t batch_size = 128;
    double lr = 0.01;
    double temperature = 1.0;
    double alpha = 0.1;
    std::optional<std::size_t> z0;  // dropping rate; kNeverDrop for "inf"
    std::vector<std::string> drop_set;

    std::string architecture = "M1";  // M1 | M2 | desk | "conv:.. flatten dense:.."
    std::string dataset = "blobs";    // blobs | csv:<path> | idx:<images>,<labels>
    std::size_t blob_classes = 10;
    std::size_t blob_per_class = 100;
    std::size_t blob_dims = 16;
    double blob_separation = 3.0;

    std::uint64_t seed = 0;
    std::size_t pre_local_epochs = 0;
    std::size_t ua_window = 10;
    KlOrder kl_order = KlOrder::teacher_student;
    bool wire_roundtrip = false;
    bool record_wall_clock = false;
    bool shared_init = true;  // every local model starts from the initial global model
};

/// Parses the flat `key = value` config format. Unknown or repeated keys
/// are errors. Values: numbers, bare words, "quoted strings", [lists].
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical ordered key/value pairs of a config (values in file syntax).
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

/// Dropping rate keyed to heterogeneity: 3, 5, 7 for alpha up to 0.1, 0.5, and above.
std::size_t default_dropping_rate(double alpha);

/// Checks invariants and fills defaults (z0, drop_set, fixed_layer) against
/// the architecture. Throws ConfigError.
RunConfig resolve_config(RunConfig cfg, const ModelSpec& spec);

ModelSpec build_architecture(const std::string& architecture, const Shape& input_shape, std::size_t num_classes);

}  // namespace fedd2s
