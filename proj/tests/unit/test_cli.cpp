#include "fedd2s/data.hpp"
#include "fedd2s/metrics.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace fedd2s;

namespace {

struct Result {
    int status = 0;
    std::string output;  // stdout and stderr
};

Result run_cli(const std::string& args) {
    const std::string cmd = std::string(FEDD2S_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    char buf[4096];
    while (const auto n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("fedd2s_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& text) {
        const auto path = dir_ / "run.cfg";
        std::ofstream(path) << text;
        return path;
    }

    fs::path dir_;
};

const char* kSmallRun = R"(protocol = fedd2s
rounds = 3
clients = 4
participation = 0.5
epochs = 2
batch_size = 8
alpha = 0.5
architecture = desk
blob_classes = 3
blob_per_class = 30
ua_window = 2
seed = 5
)";

}  // namespace

TEST_F(Cli, MissingConfigNamesPath) {
    const auto r = run_cli("run --config " + (dir_ / "nope.cfg").string() + " --out " + (dir_ / "m.json").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.output.find("nope.cfg"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("fedd2s: error:"), std::string::npos);
}

TEST_F(Cli, BadConfigKeyReportsLine) {
    const auto cfg = write_config("rounds = 2\nroundz = 3\n");
    const auto r = run_cli("run --config " + cfg.string() + " --out " + (dir_ / "m.json").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.output.find("run.cfg:2: unknown key 'roundz'"), std::string::npos) << r.output;
}

TEST_F(Cli, IdenticalRerunsAreByteIdentical) {
    const auto cfg = write_config(kSmallRun);
    const auto a = run_cli("run --config " + cfg.string() + " --out " + (dir_ / "a.json").string());
    const auto b = run_cli("run --config " + cfg.string() + " --out " + (dir_ / "b.json").string());
    ASSERT_EQ(a.status, 0) << a.output;
    ASSERT_EQ(b.status, 0) << b.output;
    EXPECT_EQ(read_file(dir_ / "a.json"), read_file(dir_ / "b.json"));
    EXPECT_NE(a.output.find("average UA"), std::string::npos);
    const auto log = load_metrics(dir_ / "a.json");
    EXPECT_EQ(log.rounds.size(), 4u);
    EXPECT_EQ(log.config.z0, 5u);
}

TEST_F(Cli, SeedOverrideAndCsvOutput) {
    const auto cfg = write_config(kSmallRun);
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir_ / "m.csv").string()).status, 0);
    const auto csv = read_file(dir_ / "m.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsCsvHeader);
    ASSERT_EQ(
        run_cli("run --config " + cfg.string() + " --seed 6 --format json --out " + (dir_ / "s.json").string()).status,
        0);
    EXPECT_EQ(load_metrics(dir_ / "s.json").config.seed, 6u);
}

TEST_F(Cli, PartitionFixtureCoversEverySample) {
    const auto fixture = std::string(FEDD2S_FIXTURE_DIR) + "/blobs-4x50.csv";
    const auto out = dir_ / "plan.json";
    const auto r = run_cli("partition --dataset csv:" + fixture + " --alpha 0.3 --clients 6 --seed 2 --out " +
                           out.string());
    ASSERT_EQ(r.status, 0) << r.output;
    const auto plan = PartitionPlan::from_json(read_file(out));
    EXPECT_EQ(plan.clients.size(), 6u);
    EXPECT_DOUBLE_EQ(plan.alpha, 0.3);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& c : plan.clients) {
        EXPECT_EQ(c.size(), 200u / 6u);
        for (auto i : c) seen.insert(i);
        total += c.size();
    }
    for (auto i : plan.discarded) seen.insert(i);
    total += plan.discarded.size();
    EXPECT_EQ(total, 200u);
    EXPECT_EQ(seen.size(), 200u);
    EXPECT_EQ(*seen.rbegin(), 199u);
}

TEST_F(Cli, PartitionToStdout) {
    const auto r = run_cli("partition --alpha 1 --clients 3 --seed 1");
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(PartitionPlan::from_json(r.output).clients.size(), 3u);
}

TEST_F(Cli, ReportDataWritesTables) {
    const auto cfg = write_config(kSmallRun);
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + (dir_ / "m.json").string()).status, 0);
    const auto r = run_cli("report-data --in " + (dir_ / "m.json").string() + " --out " + (dir_ / "tables").string() +
                           " --bucket-width 20");
    ASSERT_EQ(r.status, 0) << r.output;
    std::istringstream curves(read_file(dir_ / "tables" / "curves.csv"));
    std::string line;
    std::getline(curves, line);
    EXPECT_EQ(line, "round,mean_acc,selected_count");
    std::size_t rows = 0;
    while (std::getline(curves, line)) ++rows;
    EXPECT_EQ(rows, 4u);
    std::istringstream fairness(read_file(dir_ / "tables" / "fairness.csv"));
    std::getline(fairness, line);
    EXPECT_EQ(line, "lower,upper,count");
    std::size_t buckets = 0, clients = 0;
    while (std::getline(fairness, line)) {
        ++buckets;
        clients += std::stoul(line.substr(line.rfind(',') + 1));
    }
    EXPECT_EQ(buckets, 5u);
    EXPECT_EQ(clients, 4u);
}

TEST_F(Cli, UnknownSubcommandFails) {
    EXPECT_NE(run_cli("frobnicate").status, 0);
    EXPECT_NE(run_cli("").status, 0);
}
