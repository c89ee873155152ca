#include "fedd2s/config.hpp"

#include "fedd2s/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fedd2s {

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::fedd2s: return "fedd2s";
        case Protocol::fedd2s_fixed_layer: return "fedd2s_fixed_layer";
        case Protocol::fedd2s_mse: return "fedd2s_mse";
        case Protocol::fedavg: return "fedavg";
        case Protocol::local_only: return "local_only";
    }
    return "unknown";
}

Protocol parse_protocol(const std::string& name) {
    for (auto p : {Protocol::fedd2s, Protocol::fedd2s_fixed_layer, Protocol::fedd2s_mse, Protocol::fedavg,
                   Protocol::local_only}) {
        if (to_string(p) == name) return p;
    }
    throw ConfigError("unknown protocol '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

// Strips a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

struct Entry {
    std::string value;
    std::size_t line = 0;
};

class Reader {
public:
    Reader(std::map<std::string, Entry> entries, std::string origin)
        : entries_(std::move(entries)), origin_(std::move(origin)) {}

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string text(const std::string& key) {
        used_.insert(key);
        return unquote(entries_.at(key).value);
    }

    std::size_t count(const std::string& key) {
        const auto raw = text(key);
        try {
            std::size_t used = 0;
            if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
            const auto v = std::stoull(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw fail(key, "expected a non-negative integer, got '" + raw + "'");
        }
    }

    double real(const std::string& key) {
        const auto raw = text(key);
        try {
            std::size_t used = 0;
            const auto v = std::stod(raw, &used);
            if (used != raw.size() || !std::isfinite(v)) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw fail(key, "expected a finite number, got '" + raw + "'");
        }
    }

    bool flag(const std::string& key) {
        const auto raw = text(key);
        if (raw == "true") return true;
        if (raw == "false") return false;
        throw fail(key, "expected true or false, got '" + raw + "'");
    }

    std::vector<std::string> list(const std::string& key) {
        used_.insert(key);
        const auto raw = trim(entries_.at(key).value);
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') throw fail(key, "expected a [list]");
        std::vector<std::string> out;
        std::stringstream ss(raw.substr(1, raw.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = unquote(trim(item));
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    void reject_unused() const {
        for (const auto& [key, entry] : entries_) {
            if (!used_.count(key)) {
                throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'");
            }
        }
    }

    ConfigError fail(const std::string& key, const std::string& why) const {
        return ConfigError(origin_ + ":" + std::to_string(entries_.at(key).line) + ": " + key + ": " + why);
    }

private:
    std::map<std::string, Entry> entries_;
    std::set<std::string> used_;
    std::string origin_;
};

// Shortest text that parses back to the same double.
std::string format_real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string quote(const std::string& s) { return '"' + s + '"'; }

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
    std::map<std::string, Entry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        if (entries.count(key)) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
        }
        entries[key] = Entry{value, number};
    }

    Reader r(std::move(entries), origin);
    RunConfig cfg;
    if (r.has("protocol")) cfg.protocol = parse_protocol(r.text("protocol"));
    if (r.has("fixed_layer")) cfg.fixed_layer = r.text("fixed_layer");
    if (r.has("rounds")) cfg.rounds = r.count("rounds");
    if (r.has("clients")) cfg.clients = r.count("clients");
    if (r.has("participation")) cfg.participation = r.real("participation");
    if (r.has("epochs")) cfg.epochs = r.count("epochs");
    if (r.has("batch_size")) cfg.batch_size = r.count("batch_size");
    if (r.has("lr")) cfg.lr = r.real("lr");
    if (r.has("temperature")) cfg.temperature = r.real("temperature");
    if (r.has("alpha")) cfg.alpha = r.real("alpha");
    if (r.has("z0")) {
        cfg.z0 = r.text("z0") == "inf" ? kNeverDrop : r.count("z0");
    }
    if (r.has("drop_set")) cfg.drop_set = r.list("drop_set");
    if (r.has("architecture")) cfg.architecture = r.text("architecture");
    if (r.has("dataset")) cfg.dataset = r.text("dataset");
    if (r.has("blob_classes")) cfg.blob_classes = r.count("blob_classes");
    if (r.has("blob_per_class")) cfg.blob_per_class = r.count("blob_per_class");
    if (r.has("blob_dims")) cfg.blob_dims = r.count("blob_dims");
    if (r.has("blob_separation")) cfg.blob_separation = r.real("blob_separation");
    if (r.has("seed")) cfg.seed = r.count("seed");
    if (r.has("pre_local_epochs")) cfg.pre_local_epochs = r.count("pre_local_epochs");
    if (r.has("ua_window")) cfg.ua_window = r.count("ua_window");
    if (r.has("kl_order")) {
        const auto order = r.text("kl_order");
        if (order == "teacher_student") {
            cfg.kl_order = KlOrder::teacher_student;
        } else if (order == "student_teacher") {
            cfg.kl_order = KlOrder::student_teacher;
        } else {
            throw r.fail("kl_order", "expected teacher_student or student_teacher");
        }
    }
    if (r.has("wire_roundtrip")) cfg.wire_roundtrip = r.flag("wire_roundtrip");
    if (r.has("record_wall_clock")) cfg.record_wall_clock = r.flag("record_wall_clock");
    if (r.has("shared_init")) cfg.shared_init = r.flag("shared_init");
    r.reject_unused();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("protocol", to_string(cfg.protocol));
    if (!cfg.fixed_layer.empty()) out.emplace_back("fixed_layer", quote(cfg.fixed_layer));
    out.emplace_back("rounds", std::to_string(cfg.rounds));
    out.emplace_back("clients", std::to_string(cfg.clients));
    out.emplace_back("participation", format_real(cfg.participation));
    out.emplace_back("epochs", std::to_string(cfg.epochs));
    out.emplace_back("batch_size", std::to_string(cfg.batch_size));
    out.emplace_back("lr", format_real(cfg.lr));
    out.emplace_back("temperature", format_real(cfg.temperature));
    out.emplace_back("alpha", format_real(cfg.alpha));
    if (cfg.z0) out.emplace_back("z0", *cfg.z0 == kNeverDrop ? "inf" : std::to_string(*cfg.z0));
    if (!cfg.drop_set.empty()) {
        std::string list = "[";
        for (std::size_t i = 0; i < cfg.drop_set.size(); ++i) {
            if (i) list += ", ";
            list += quote(cfg.drop_set[i]);
        }
        out.emplace_back("drop_set", list + "]");
    }
    out.emplace_back("architecture", quote(cfg.architecture));
    out.emplace_back("dataset", quote(cfg.dataset));
    out.emplace_back("blob_classes", std::to_string(cfg.blob_classes));
    out.emplace_back("blob_per_class", std::to_string(cfg.blob_per_class));
    out.emplace_back("blob_dims", std::to_string(cfg.blob_dims));
    out.emplace_back("blob_separation", format_real(cfg.blob_separation));
    out.emplace_back("seed", std::to_string(cfg.seed));
    out.emplace_back("pre_local_epochs", std::to_string(cfg.pre_local_epochs));
    out.emplace_back("ua_window", std::to_string(cfg.ua_window));
    out.emplace_back("kl_order", cfg.kl_order == KlOrder::teacher_student ? "teacher_student" : "student_teacher");
    out.emplace_back("wire_roundtrip", cfg.wire_roundtrip ? "true" : "false");
    out.emplace_back("record_wall_clock", cfg.record_wall_clock ? "true" : "false");
    out.emplace_back("shared_init", cfg.shared_init ? "true" : "false");
    return out;
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : config_entries(cfg)) out += key + " = " + value + "\n";
    return out;
}

std::size_t default_dropping_rate(double alpha) {
    if (alpha <= 0.1) return 3;
    if (alpha <= 0.5) return 5;
    return 7;
}

ModelSpec build_architecture(const std::string& architecture, const Shape& input_shape, std::size_t num_classes) {
    if (architecture == "M1") return make_m1(input_shape, num_classes);
    if (architecture == "M2") return make_m2(input_shape, num_classes);
    if (architecture == "desk") return make_desk(input_shape, num_classes);
    auto spec = parse_architecture(architecture, input_shape);
    if (spec.num_classes() != num_classes) {
        throw ConfigError("architecture ends in " + std::to_string(spec.num_classes()) + " units but the dataset has " +
                          std::to_string(num_classes) + " classes");
    }
    return spec;
}

RunConfig resolve_config(RunConfig cfg, const ModelSpec& spec) {
    if (!(cfg.participation > 0.0 && cfg.participation <= 1.0)) throw ConfigError("participation must lie in (0, 1]");
    if (cfg.clients < 1) throw ConfigError("clients must be at least 1");
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(cfg.alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (cfg.ua_window < 1) throw ConfigError("ua_window must be at least 1");
    if (cfg.rounds >= 1 && cfg.ua_window > cfg.rounds) throw ConfigError("ua_window must not exceed rounds");
    if (!cfg.z0) cfg.z0 = default_dropping_rate(cfg.alpha);
    if (*cfg.z0 < 1) throw ConfigError("z0 must be at least 1");

    std::size_t last_conv = 0, first_dense = 0;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        if (spec.layer(l).kind == LayerKind::conv2d) last_conv = l;
        if (spec.layer(l).kind == LayerKind::dense && first_dense == 0) first_dense = l;
    }
    auto check_boundary = [&](const std::string& name) {
        const auto l = spec.find_layer(name);
        if (!l) throw ConfigError("layer '" + name + "' does not exist in the architecture");
        if (spec.layer(*l).kind == LayerKind::flatten) {
            throw ConfigError("flatten is not a distillation boundary; name the conv layer before it");
        }
    };
    if (cfg.drop_set.empty()) {
        // Last conv layer plus every dense layer after it.
        const auto start = last_conv ? last_conv : first_dense;
        for (std::size_t l = start; l <= spec.depth(); ++l) {
            if (spec.layer(l).kind != LayerKind::flatten) cfg.drop_set.push_back(spec.layer_name(l));
        }
    }
    for (const auto& name : cfg.drop_set) check_boundary(name);
    if (cfg.protocol == Protocol::fedd2s_fixed_layer) {
        if (cfg.fixed_layer.empty()) cfg.fixed_layer = spec.layer_name(last_conv ? last_conv : first_dense);
        check_boundary(cfg.fixed_layer);
    } else if (!cfg.fixed_layer.empty()) {
        throw ConfigError("fixed_layer is only valid with protocol fedd2s_fixed_layer");
    }
    return cfg;
}

}  // namespace fedd2s
