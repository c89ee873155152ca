#include "fedd2s/errors.hpp"
#include "fedd2s/protocol.hpp"

#include <algorithm>
#include <functional>

namespace fedd2s {

DropConfig::DropConfig(const ModelSpec& spec, std::vector<std::size_t> layers, std::size_t rate)
    : layers_(std::move(layers)), rate_(rate) {
    if (layers_.empty()) throw ConfigError("drop set must not be empty");
    if (rate_ < 1) throw ConfigError("dropping rate must be at least 1");
    std::sort(layers_.begin(), layers_.end(), std::greater<>());
    if (std::adjacent_find(layers_.begin(), layers_.end()) != layers_.end()) {
        throw ConfigError("drop set contains a layer twice");
    }
    for (auto l : layers_) {
        if (l < 1 || l > spec.depth()) throw ConfigError("drop set layer " + std::to_string(l) + " out of range");
        if (spec.layer(l).kind == LayerKind::flatten) throw ConfigError("flatten is not a distillation boundary");
    }
}

DropConfig DropConfig::from_names(const ModelSpec& spec, const std::vector<std::string>& names, std::size_t rate) {
    std::vector<std::size_t> layers;
    for (const auto& name : names) {
        const auto l = spec.find_layer(name);
        if (!l) throw ConfigError("drop set layer '" + name + "' does not exist");
        layers.push_back(*l);
    }
    return DropConfig(spec, std::move(layers), rate);
}

std::size_t distillation_layer(std::size_t participation, const DropConfig& cfg) {
    if (participation < 1) throw ArgumentError("distillation layer requested for a client that never participated");
    const auto step = (participation - 1) / cfg.rate();
    const auto& layers = cfg.layers();
    return layers[std::min(step, layers.size() - 1)];
}

}  // namespace fedd2s
