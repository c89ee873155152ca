// fedd2s: partition datasets, run simulations, and export plotting tables.

#include "fedd2s/data.hpp"
#include "fedd2s/errors.hpp"
#include "fedd2s/metrics.hpp"
#include "fedd2s/protocol.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fedd2s::IoError("cannot write " + path.string());
    out << text;
    if (!out) throw fedd2s::IoError("failed writing " + path.string());
}

struct PartitionArgs {
    std::string dataset = "blobs";
    double alpha = 0.1;
    std::size_t clients = 10;
    std::uint64_t seed = 0;
    std::string out;
};

void partition(const PartitionArgs& args) {
    fedd2s::RunConfig cfg;
    cfg.dataset = args.dataset;
    cfg.seed = args.seed;
    const auto ds = fedd2s::load_run_dataset(cfg);
    const auto plan = fedd2s::dirichlet_partition(ds, args.clients, args.alpha, args.seed);
    if (args.out.empty() || args.out == "-") {
        std::cout << plan.to_json();
    } else {
        write_text(args.out, plan.to_json());
    }
}

struct RunArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string format;
};

void run(const RunArgs& args) {
    auto cfg = fedd2s::load_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    auto format = fs::path(args.out).extension() == ".csv" ? fedd2s::MetricsFormat::csv : fedd2s::MetricsFormat::json;
    if (args.format == "csv") format = fedd2s::MetricsFormat::csv;
    if (args.format == "json") format = fedd2s::MetricsFormat::json;
    const auto log = fedd2s::run_training(cfg);
    fedd2s::emit_metrics(log, args.out, format);
    if (log.rounds.size() > 1) {
        const auto window = std::min(log.config.ua_window, log.rounds.size() - 1);
        std::cerr << "average UA over last " << window << " rounds: " << fedd2s::average_ua(log, window) << "%\n";
    }
}

struct ReportArgs {
    std::string in;
    std::string out;
    double bucket_width = 10.0;
    std::optional<std::size_t> window;
};

void report_data(const ReportArgs& args) {
    const auto log = fedd2s::load_metrics(args.in);
    if (log.rounds.empty()) throw fedd2s::IoError(args.in + " holds no rounds");
    fs::create_directories(args.out);

    std::ostringstream curves;
    curves.precision(17);
    curves << "round,mean_acc,selected_count\n";
    for (const auto& r : log.rounds) {
        curves << r.round << ',' << 100.0 * r.mean_accuracy() << ',' << r.selected.size() << '\n';
    }
    write_text(fs::path(args.out) / "curves.csv", curves.str());

    const auto window = args.window.value_or(std::min(log.config.ua_window, log.rounds.size()));
    const auto hist = fedd2s::fairness_histogram(fedd2s::per_client_ua(log, window), args.bucket_width);
    std::ostringstream fairness;
    fairness << "lower,upper,count\n";
    for (const auto& b : hist) fairness << b.lower << ',' << b.upper << ',' << b.count << '\n';
    write_text(fs::path(args.out) / "fairness.csv", fairness.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedD2S federated distillation simulator"};
    app.require_subcommand(1);

    PartitionArgs part;
    auto* part_cmd = app.add_subcommand("partition", "Dirichlet partition of a dataset into a JSON plan");
    part_cmd->add_option("--dataset", part.dataset, "blobs | csv:<path> | idx:<images>,<labels>");
    part_cmd->add_option("--alpha", part.alpha, "Dirichlet concentration")->check(CLI::PositiveNumber);
    part_cmd->add_option("--clients", part.clients, "number of clients")->check(CLI::PositiveNumber);
    part_cmd->add_option("--seed", part.seed, "partition seed");
    part_cmd->add_option("--out", part.out, "output JSON path (stdout when omitted)");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Run a simulation from a config file");
    run_cmd->add_option("--config", run_args.config, "config file")->required();
    run_cmd->add_option("--out", run_args.out, "metrics file (.json or .csv)")->required();
    run_cmd->add_option("--seed", run_args.seed, "override the config seed");
    run_cmd->add_option("--format", run_args.format, "json | csv (default: from extension)")
        ->check(CLI::IsMember({"json", "csv"}));

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report-data", "Learning-curve and fairness tables from a metrics file");
    report_cmd->add_option("--in", report.in, "metrics file")->required();
    report_cmd->add_option("--out", report.out, "output directory")->required();
    report_cmd->add_option("--bucket-width", report.bucket_width, "fairness bucket width in percent");
    report_cmd->add_option("--window", report.window, "UA window (default: config ua_window)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*part_cmd) partition(part);
        if (*run_cmd) run(run_args);
        if (*report_cmd) report_data(report);
    } catch (const std::exception& e) {
        std::cerr << "fedd2s: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
