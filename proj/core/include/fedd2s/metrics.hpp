#pragma once

#include "fedd2s/config.hpp"

#include <cstddef>
#include <filesystem>
#include <vector>

namespace fedd2s {

struct ClientRecord {
    std::size_t client_id = 0;
    bool selected = false;
    double test_acc = 0.0;
    std::size_t distill_layer = 0;  // 0 when the client did not distill this round
    double loss_kl = 0.0;           // mean distillation loss of the client update
    double loss_ce = 0.0;           // mean ground-truth loss of the client update

    friend bool operator==(const ClientRecord&, const ClientRecord&) = default;
};

/// One evaluation point. Round 0 holds the initial models.
struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::size_t> selected;
    std::vector<ClientRecord> clients;  // every client, ordered by id
    double server_kl = 0.0;             // mean server-side distillation loss
    double server_ce = 0.0;
    double wall_clock_s = 0.0;

    double mean_accuracy() const;
    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct MetricsLog {
    RunConfig config;
    std::vector<RoundRecord> rounds;
};

/// 100 * mean over the last `window` records of the client-mean accuracy.
double average_ua(const MetricsLog& log, std::size_t window);

/// Per-client accuracy (percent) averaged over the last `window` records.
std::vector<double> per_client_ua(const MetricsLog& log, std::size_t window);

struct Bucket {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
};

/// Buckets [0, w), [w, 2w), ..., [100 - w, 100]; `bucket_width` must divide 100.
std::vector<Bucket> fairness_histogram(const std::vector<double>& ua_percent, double bucket_width);

enum class MetricsFormat { json, csv };

inline constexpr const char* kMetricsCsvHeader = "round,client_id,selected,test_acc,distill_layer,loss_kl,loss_ce";

std::string metrics_to_json(const MetricsLog& log);
MetricsLog metrics_from_json(const std::string& text);
std::string metrics_to_csv(const MetricsLog& log);
/// CSV holds the per-client rows only; the config is left at its defaults.
MetricsLog metrics_from_csv(const std::string& text);

void emit_metrics(const MetricsLog& log, const std::filesystem::path& path, MetricsFormat format);
/// Format chosen by extension: .csv, anything else is read as JSON.
MetricsLog load_metrics(const std::filesystem::path& path);

}  // namespace fedd2s
