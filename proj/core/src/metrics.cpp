#include "fedd2s/metrics.hpp"

#include "fedd2s/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace fedd2s {

double RoundRecord::mean_accuracy() const {
    if (clients.empty()) return 0.0;
    double total = 0.0;
    for (const auto& c : clients) total += c.test_acc;
    return total / static_cast<double>(clients.size());
}

namespace {

void check_window(const MetricsLog& log, std::size_t window) {
    if (window < 1) throw ArgumentError("UA window must be at least 1");
    if (window > log.rounds.size()) {
        throw ArgumentError("UA window " + std::to_string(window) + " exceeds the " +
                            std::to_string(log.rounds.size()) + " recorded rounds");
    }
}

}  // namespace

double average_ua(const MetricsLog& log, std::size_t window) {
    check_window(log, window);
    double total = 0.0;
    for (auto it = log.rounds.end() - static_cast<std::ptrdiff_t>(window); it != log.rounds.end(); ++it) {
        total += it->mean_accuracy();
    }
    return 100.0 * total / static_cast<double>(window);
}

std::vector<double> per_client_ua(const MetricsLog& log, std::size_t window) {
    check_window(log, window);
    const auto n = log.rounds.back().clients.size();
    std::vector<double> out(n, 0.0);
    for (auto it = log.rounds.end() - static_cast<std::ptrdiff_t>(window); it != log.rounds.end(); ++it) {
        if (it->clients.size() != n) throw ArgumentError("rounds disagree on the number of clients");
        for (std::size_t i = 0; i < n; ++i) out[i] += it->clients[i].test_acc;
    }
    for (auto& v : out) v = 100.0 * v / static_cast<double>(window);
    return out;
}

std::vector<Bucket> fairness_histogram(const std::vector<double>& ua_percent, double bucket_width) {
    if (!(bucket_width > 0.0)) throw ArgumentError("bucket width must be positive");
    const double buckets = 100.0 / bucket_width;
    if (std::abs(buckets - std::round(buckets)) > 1e-9) throw ArgumentError("bucket width must divide 100");
    const auto n = static_cast<std::size_t>(std::llround(buckets));
    std::vector<Bucket> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].lower = bucket_width * static_cast<double>(i);
        out[i].upper = bucket_width * static_cast<double>(i + 1);
    }
    for (double ua : ua_percent) {
        if (ua < 0.0 || ua > 100.0) throw ArgumentError("UA values must lie in [0, 100]");
        auto idx = static_cast<std::size_t>(std::floor(ua / bucket_width));
        if (idx >= n) idx = n - 1;
        ++out[idx].count;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string metrics_to_json(const MetricsLog& log) {
    nlohmann::ordered_json doc;
    auto& cfg = doc["config"] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : config_entries(log.config)) cfg[key] = value;
    auto& rounds = doc["rounds"] = nlohmann::ordered_json::array();
    for (const auto& r : log.rounds) {
        nlohmann::ordered_json jr;
        jr["round"] = r.round;
        jr["selected"] = r.selected;
        jr["server_kl"] = r.server_kl;
        jr["server_ce"] = r.server_ce;
        jr["wall_clock_s"] = r.wall_clock_s;
        auto& clients = jr["clients"] = nlohmann::ordered_json::array();
        for (const auto& c : r.clients) {
            clients.push_back({{"client_id", c.client_id},
                               {"selected", c.selected},
                               {"test_acc", c.test_acc},
                               {"distill_layer", c.distill_layer},
                               {"loss_kl", c.loss_kl},
                               {"loss_ce", c.loss_ce}});
        }
        rounds.push_back(std::move(jr));
    }
    return doc.dump(1) + "\n";
}

MetricsLog metrics_from_json(const std::string& text) {
    MetricsLog log;
    try {
        const auto doc = nlohmann::json::parse(text);
        std::string cfg_text;
        for (const auto& [key, value] : doc.at("config").items()) cfg_text += key + " = " + value.get<std::string>() + "\n";
        log.config = parse_config(cfg_text, "<metrics config>");
        for (const auto& jr : doc.at("rounds")) {
            RoundRecord r;
            r.round = jr.at("round").get<std::size_t>();
            r.selected = jr.at("selected").get<std::vector<std::size_t>>();
            r.server_kl = jr.at("server_kl").get<double>();
            r.server_ce = jr.at("server_ce").get<double>();
            r.wall_clock_s = jr.at("wall_clock_s").get<double>();
            for (const auto& jc : jr.at("clients")) {
                ClientRecord c;
                c.client_id = jc.at("client_id").get<std::size_t>();
                c.selected = jc.at("selected").get<bool>();
                c.test_acc = jc.at("test_acc").get<double>();
                c.distill_layer = jc.at("distill_layer").get<std::size_t>();
                c.loss_kl = jc.at("loss_kl").get<double>();
                c.loss_ce = jc.at("loss_ce").get<double>();
                r.clients.push_back(c);
            }
            log.rounds.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed metrics JSON: ") + e.what());
    }
    return log;
}

std::string metrics_to_csv(const MetricsLog& log) {
    auto real = [](double v) {
        char buf[32];
        return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    };
    std::ostringstream os;
    os << kMetricsCsvHeader << '\n';
    for (const auto& r : log.rounds) {
        for (const auto& c : r.clients) {
            os << r.round << ',' << c.client_id << ',' << (c.selected ? 1 : 0) << ',' << real(c.test_acc) << ','
               << c.distill_layer << ',' << real(c.loss_kl) << ',' << real(c.loss_ce) << '\n';
        }
    }
    return os.str();
}

MetricsLog metrics_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
    for (const char* required : {"round", "client_id", "selected", "test_acc", "distill_layer", "loss_kl", "loss_ce"}) {
        if (!column.count(required)) throw IoError(std::string("metrics CSV is missing column '") + required + "'");
    }

    MetricsLog log;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) {
            throw IoError("metrics CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                          " fields, expected " + std::to_string(header.size()));
        }
        auto number = [&](const char* name) {
            const auto& s = cells[column.at(name)];
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw IoError("metrics CSV row " + std::to_string(row) + ", column '" + name + "': bad value '" + s + "'");
            }
        };
        const auto round = static_cast<std::size_t>(number("round"));
        if (log.rounds.empty() || log.rounds.back().round != round) {
            log.rounds.emplace_back();
            log.rounds.back().round = round;
        }
        auto& r = log.rounds.back();
        ClientRecord c;
        c.client_id = static_cast<std::size_t>(number("client_id"));
        c.selected = number("selected") != 0.0;
        c.test_acc = number("test_acc");
        c.distill_layer = static_cast<std::size_t>(number("distill_layer"));
        c.loss_kl = number("loss_kl");
        c.loss_ce = number("loss_ce");
        if (c.selected) r.selected.push_back(c.client_id);
        r.clients.push_back(c);
    }
    return log;
}

void emit_metrics(const MetricsLog& log, const std::filesystem::path& path, MetricsFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write metrics to " + path.string());
    out << (format == MetricsFormat::json ? metrics_to_json(log) : metrics_to_csv(log));
    if (!out) throw IoError("failed writing metrics to " + path.string());
}

MetricsLog load_metrics(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read metrics file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    if (path.extension() == ".csv") return metrics_from_csv(buffer.str());
    return metrics_from_json(buffer.str());
}

}  // namespace fedd2s
