#include "fedd2s/model.hpp"

#include "fedd2s/errors.hpp"
#include "fedd2s/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedd2s {

LayerSpec LayerSpec::conv(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                          Activation act) {
    return {LayerKind::conv2d, channels, kernel, stride, padding, act};
}

LayerSpec LayerSpec::flat() { return {LayerKind::flatten, 0, 0, 1, 0, Activation::none}; }

LayerSpec LayerSpec::dense(std::size_t units, Activation act) { return {LayerKind::dense, units, 0, 1, 0, act}; }

namespace {

Shape infer_output(const LayerSpec& layer, const Shape& in, std::size_t index) {
    const auto where = "layer " + std::to_string(index) + ": ";
    switch (layer.kind) {
        case LayerKind::conv2d: {
            if (in.size() != 3) throw ConfigError(where + "conv2d expects (H, W, C) input, got " + shape_string(in));
            if (layer.units == 0 || layer.kernel == 0 || layer.stride == 0)
                throw ConfigError(where + "conv2d needs positive channels, kernel and stride");
            const auto h = in[0] + 2 * layer.padding;
            const auto w = in[1] + 2 * layer.padding;
            if (h < layer.kernel || w < layer.kernel)
                throw ConfigError(where + "kernel " + std::to_string(layer.kernel) + " larger than padded input " +
                                  shape_string(in));
            return {(h - layer.kernel) / layer.stride + 1, (w - layer.kernel) / layer.stride + 1, layer.units};
        }
        case LayerKind::flatten:
            return {shape_size(in)};
        case LayerKind::dense:
            if (in.size() != 1) throw ConfigError(where + "dense expects a flat input, got " + shape_string(in));
            if (layer.units == 0) throw ConfigError(where + "dense needs positive units");
            return {layer.units};
    }
    throw ConfigError(where + "unknown layer kind");
}

}  // namespace

ModelSpec::ModelSpec(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (input_shape_.empty() || shape_size(input_shape_) == 0)
        throw ConfigError("model input shape must be nonempty and positive");
    if (layers_.empty()) throw ConfigError("model needs at least one layer");
    if (layers_.back().kind != LayerKind::dense) throw ConfigError("last layer must be dense (logits)");
    if (layers_.back().activation != Activation::none) throw ConfigError("last layer must not have an activation");
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        shapes_.push_back(infer_output(layers_[i], shapes_.back(), i + 1));
    }
}

const LayerSpec& ModelSpec::layer(std::size_t l) const {
    if (l < 1 || l > layers_.size()) throw ArgumentError("layer index " + std::to_string(l) + " out of range");
    return layers_[l - 1];
}

const Shape& ModelSpec::output_shape(std::size_t l) const {
    if (l > layers_.size()) throw ArgumentError("layer index " + std::to_string(l) + " out of range");
    return shapes_[l];
}

std::size_t ModelSpec::num_classes() const { return layers_.back().units; }

std::string ModelSpec::layer_name(std::size_t l) const {
    const auto& target = layer(l);
    if (target.kind == LayerKind::flatten) return "flatten";
    std::size_t ordinal = 0;
    for (std::size_t i = 1; i <= l; ++i) {
        if (layers_[i - 1].kind == target.kind) ++ordinal;
    }
    return (target.kind == LayerKind::conv2d ? "C" : "F") + std::to_string(ordinal);
}

std::optional<std::size_t> ModelSpec::find_layer(const std::string& name) const {
    for (std::size_t l = 1; l <= depth(); ++l) {
        if (layer_name(l) == name) return l;
    }
    return std::nullopt;
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t total = 0;
    for (std::size_t l = 1; l <= depth(); ++l) {
        const auto& layer = layers_[l - 1];
        const auto& in = shapes_[l - 1];
        if (layer.kind == LayerKind::conv2d) {
            total += layer.kernel * layer.kernel * in[2] * layer.units + layer.units;
        } else if (layer.kind == LayerKind::dense) {
            total += in[0] * layer.units + layer.units;
        }
    }
    return total;
}

namespace {

ModelSpec make_cnn(Shape input_shape, std::size_t c1, std::size_t c2, std::size_t c3, std::size_t f1, std::size_t f2,
                   std::size_t classes, std::size_t stride) {
    return ModelSpec(std::move(input_shape), {LayerSpec::conv(c1, 3, stride, 1), LayerSpec::conv(c2, 3, stride, 1),
                                              LayerSpec::conv(c3, 3, stride, 1), LayerSpec::flat(),
                                              LayerSpec::dense(f1), LayerSpec::dense(f2),
                                              LayerSpec::dense(classes, Activation::none)});
}

}  // namespace

ModelSpec make_m1(Shape input_shape, std::size_t num_classes) {
    return make_cnn(std::move(input_shape), 8, 16, 32, 32, 16, num_classes, 2);
}

ModelSpec make_m2(Shape input_shape, std::size_t num_classes) {
    return make_cnn(std::move(input_shape), 16, 64, 128, 128, 32, num_classes, 2);
}

ModelSpec make_desk(Shape input_shape, std::size_t num_classes) {
    return make_cnn(std::move(input_shape), 4, 8, 8, 16, 8, num_classes, 1);
}

ModelSpec parse_architecture(const std::string& text, Shape input_shape) {
    std::istringstream in(text);
    std::string token;
    std::vector<LayerSpec> layers;
    auto parse_fields = [](const std::string& tok) {
        std::vector<std::size_t> fields;
        std::istringstream parts(tok);
        std::string part;
        std::getline(parts, part, ':');  // kind
        while (std::getline(parts, part, ':')) {
            try {
                std::size_t used = 0;
                const auto v = std::stoul(part, &used);
                if (used != part.size()) throw std::invalid_argument(part);
                fields.push_back(v);
            } catch (const std::exception&) {
                throw ConfigError("architecture token '" + tok + "': '" + part + "' is not a non-negative integer");
            }
        }
        return fields;
    };
    while (in >> token) {
        if (token == "flatten") {
            layers.push_back(LayerSpec::flat());
        } else if (token.rfind("conv:", 0) == 0) {
            auto f = parse_fields(token);
            if (f.empty() || f.size() > 4) throw ConfigError("architecture token '" + token + "': expected conv:C[:K[:S[:P]]]");
            layers.push_back(LayerSpec::conv(f[0], f.size() > 1 ? f[1] : 3, f.size() > 2 ? f[2] : 1,
                                             f.size() > 3 ? f[3] : 0));
        } else if (token.rfind("dense:", 0) == 0) {
            auto f = parse_fields(token);
            if (f.size() != 1) throw ConfigError("architecture token '" + token + "': expected dense:UNITS");
            layers.push_back(LayerSpec::dense(f[0]));
        } else {
            throw ConfigError("unknown architecture token '" + token + "'");
        }
    }
    if (layers.empty()) throw ConfigError("architecture string is empty");
    layers.back().activation = Activation::none;
    return ModelSpec(std::move(input_shape), std::move(layers));
}

std::string format_architecture(const ModelSpec& spec) {
    std::ostringstream os;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        const auto& layer = spec.layer(l);
        if (l > 1) os << ' ';
        switch (layer.kind) {
            case LayerKind::conv2d:
                os << "conv:" << layer.units << ':' << layer.kernel << ':' << layer.stride << ':' << layer.padding;
                break;
            case LayerKind::flatten:
                os << "flatten";
                break;
            case LayerKind::dense:
                os << "dense:" << layer.units;
                break;
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelSpec& spec) {
    ModelParams params;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        const auto& layer = spec.layer(l);
        const auto& in = spec.output_shape(l - 1);
        ParamBlock block;
        if (layer.kind == LayerKind::conv2d) {
            block.weight = Tensor({layer.kernel, layer.kernel, in[2], layer.units});
            block.bias = Tensor({layer.units});
        } else if (layer.kind == LayerKind::dense) {
            block.weight = Tensor({in[0], layer.units});
            block.bias = Tensor({layer.units});
        }
        params.blocks_.push_back(std::move(block));
    }
    return params;
}

ModelParams ModelParams::he_uniform(const ModelSpec& spec, std::uint64_t seed) {
    auto params = zeros(spec);
    Rng rng(seed);
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        auto& block = params.block(l);
        if (block.weight.empty()) continue;
        const auto fan_in = block.weight.size() / block.weight.shape().back();
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : block.weight.values()) w = dist(rng);
    }
    return params;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& b : blocks_) total += b.weight.size() + b.bias.size();
    return total;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i].weight.shape() != other.blocks_[i].weight.shape()) return false;
        if (blocks_[i].bias.shape() != other.blocks_[i].bias.shape()) return false;
    }
    return true;
}

void ModelParams::assign_range(const ModelParams& other, LayerRange range) {
    if (!same_shape(other)) throw ArgumentError("assign_range: parameter shapes differ");
    for (std::size_t l = 1; l <= depth(); ++l) {
        if (range.contains(l)) block(l) = other.block(l);
    }
}

bool ModelParams::range_equal(const ModelParams& other, LayerRange range) const {
    if (!same_shape(other)) return false;
    for (std::size_t l = 1; l <= depth(); ++l) {
        if (range.contains(l) && !(block(l) == other.block(l))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Layer kernels. Samples are NHWC; conv weights are (k, k, in, out).

namespace {

void check_params(const ModelSpec& spec, const ModelParams& params) {
    if (params.depth() != spec.depth()) {
        throw ConfigError("parameters have " + std::to_string(params.depth()) + " layers, spec has " +
                          std::to_string(spec.depth()));
    }
}

void check_input(const ModelSpec& spec, const Tensor& input, std::size_t from, std::size_t to) {
    if (from > to || to > spec.depth()) {
        throw ArgumentError("layer range " + std::to_string(from) + ".." + std::to_string(to) + " invalid for depth " +
                            std::to_string(spec.depth()));
    }
    const auto& expected = spec.output_shape(from);
    if (input.rank() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), input.shape().begin() + 1)) {
        const auto message =
            "input shape " + shape_string(input.shape()) + " does not match (B, " + shape_string(expected).substr(1);
        // A bad model input means the data and architecture disagree.
        if (from == 0) throw ConfigError(message);
        throw ArgumentError(message);
    }
}

Shape batched(std::size_t batch, const Shape& sample) {
    Shape s{batch};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

Tensor conv_forward(const LayerSpec& layer, const ParamBlock& block, const Tensor& in, const Shape& out_shape) {
    const auto batch = in.dim(0), ih = in.dim(1), iw = in.dim(2), ic = in.dim(3);
    const auto oh = out_shape[0], ow = out_shape[1], oc = out_shape[2];
    const auto k = layer.kernel, s = layer.stride;
    const auto pad = static_cast<long>(layer.padding);
    Tensor out(batched(batch, out_shape));
    const auto* x = in.values().data();
    const auto* w = block.weight.values().data();
    const auto* bias = block.bias.values().data();
    auto* y = out.values().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double* dst = y + ((b * oh + oy) * ow + ox) * oc;
                for (std::size_t o = 0; o < oc; ++o) dst[o] = bias[o];
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy * s + ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long ix = static_cast<long>(ox * s + kx) - pad;
                        if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                        const double* src = x + ((b * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix)) * ic;
                        const double* wk = w + (ky * k + kx) * ic * oc;
                        for (std::size_t c = 0; c < ic; ++c) {
                            const double v = src[c];
                            const double* wr = wk + c * oc;
                            for (std::size_t o = 0; o < oc; ++o) dst[o] += v * wr[o];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// grad_out is w.r.t. the pre-activation output. Accumulates into grads when non-null.
Tensor conv_backward(const LayerSpec& layer, const ParamBlock& block, const Tensor& in, const Tensor& grad_out,
                     ParamBlock* grads) {
    const auto batch = in.dim(0), ih = in.dim(1), iw = in.dim(2), ic = in.dim(3);
    const auto oh = grad_out.dim(1), ow = grad_out.dim(2), oc = grad_out.dim(3);
    const auto k = layer.kernel, s = layer.stride;
    const auto pad = static_cast<long>(layer.padding);
    Tensor grad_in(in.shape());
    const auto* x = in.values().data();
    const auto* w = block.weight.values().data();
    const auto* gy = grad_out.values().data();
    auto* gx = grad_in.values().data();
    double* gw = grads ? grads->weight.values().data() : nullptr;
    double* gb = grads ? grads->bias.values().data() : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* g = gy + ((b * oh + oy) * ow + ox) * oc;
                if (gb) {
                    for (std::size_t o = 0; o < oc; ++o) gb[o] += g[o];
                }
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy * s + ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long ix = static_cast<long>(ox * s + kx) - pad;
                        if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                        const auto offset = ((b * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix)) * ic;
                        const double* src = x + offset;
                        double* gsrc = gx + offset;
                        const double* wk = w + (ky * k + kx) * ic * oc;
                        double* gwk = gw ? gw + (ky * k + kx) * ic * oc : nullptr;
                        for (std::size_t c = 0; c < ic; ++c) {
                            const double* wr = wk + c * oc;
                            double acc = 0.0;
                            for (std::size_t o = 0; o < oc; ++o) acc += wr[o] * g[o];
                            gsrc[c] += acc;
                            if (gwk) {
                                double* gwr = gwk + c * oc;
                                const double v = src[c];
                                for (std::size_t o = 0; o < oc; ++o) gwr[o] += v * g[o];
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor dense_forward(const ParamBlock& block, const Tensor& in) {
    const auto batch = in.dim(0), n_in = in.dim(1), n_out = block.weight.dim(1);
    Tensor out({batch, n_out});
    const auto* x = in.values().data();
    const auto* w = block.weight.values().data();
    const auto* bias = block.bias.values().data();
    auto* y = out.values().data();
    for (std::size_t b = 0; b < batch; ++b) {
        double* dst = y + b * n_out;
        for (std::size_t o = 0; o < n_out; ++o) dst[o] = bias[o];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double v = x[b * n_in + i];
            const double* wr = w + i * n_out;
            for (std::size_t o = 0; o < n_out; ++o) dst[o] += v * wr[o];
        }
    }
    return out;
}

Tensor dense_backward(const ParamBlock& block, const Tensor& in, const Tensor& grad_out, ParamBlock* grads) {
    const auto batch = in.dim(0), n_in = in.dim(1), n_out = block.weight.dim(1);
    Tensor grad_in(in.shape());
    const auto* x = in.values().data();
    const auto* w = block.weight.values().data();
    const auto* gy = grad_out.values().data();
    auto* gx = grad_in.values().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* g = gy + b * n_out;
        if (grads) {
            auto* gb = grads->bias.values().data();
            for (std::size_t o = 0; o < n_out; ++o) gb[o] += g[o];
        }
        for (std::size_t i = 0; i < n_in; ++i) {
            const double* wr = w + i * n_out;
            double acc = 0.0;
            for (std::size_t o = 0; o < n_out; ++o) acc += wr[o] * g[o];
            gx[b * n_in + i] = acc;
            if (grads) {
                const double v = x[b * n_in + i];
                double* gwr = grads->weight.values().data() + i * n_out;
                for (std::size_t o = 0; o < n_out; ++o) gwr[o] += v * g[o];
            }
        }
    }
    return grad_in;
}

Tensor apply_layer(const ModelSpec& spec, const ModelParams& params, std::size_t l, const Tensor& in) {
    const auto& layer = spec.layer(l);
    Tensor out;
    switch (layer.kind) {
        case LayerKind::conv2d:
            out = conv_forward(layer, params.block(l), in, spec.output_shape(l));
            break;
        case LayerKind::flatten:
            return in.reshaped(batched(in.dim(0), spec.output_shape(l)));
        case LayerKind::dense:
            out = dense_forward(params.block(l), in);
            break;
    }
    if (layer.activation == Activation::relu) {
        for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    }
    return out;
}

}  // namespace

Tensor forward_range(const ModelSpec& spec, const ModelParams& params, const Tensor& input, std::size_t from,
                     std::size_t to) {
    check_params(spec, params);
    check_input(spec, input, from, to);
    Tensor current = input;
    for (std::size_t l = from + 1; l <= to; ++l) current = apply_layer(spec, params, l, current);
    return current;
}

ForwardTrace trace_range(const ModelSpec& spec, const ModelParams& params, const Tensor& input, std::size_t from,
                         std::size_t to) {
    check_params(spec, params);
    check_input(spec, input, from, to);
    ForwardTrace trace;
    trace.from = from;
    trace.to = to;
    trace.acts.reserve(to - from + 1);
    trace.acts.push_back(input);
    for (std::size_t l = from + 1; l <= to; ++l) trace.acts.push_back(apply_layer(spec, params, l, trace.acts.back()));
    return trace;
}

Tensor forward_prefix(const ModelSpec& spec, const ModelParams& params, const Tensor& x, std::size_t l) {
    if (l < 1 || l > spec.depth()) throw ArgumentError("prefix layer " + std::to_string(l) + " out of range 1.." +
                                                       std::to_string(spec.depth()));
    return forward_range(spec, params, x, 0, l);
}

Tensor forward_suffix(const ModelSpec& spec, const ModelParams& params, const Tensor& h, std::size_t l) {
    if (l < 1 || l > spec.depth()) throw ArgumentError("suffix layer " + std::to_string(l) + " out of range 1.." +
                                                       std::to_string(spec.depth()));
    return forward_range(spec, params, h, l, spec.depth());
}

Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x) {
    return forward_range(spec, params, x, 0, spec.depth());
}

BackwardResult backward(const ModelSpec& spec, const ModelParams& params, const ForwardTrace& trace,
                        const Tensor& output_grad, LayerRange trainable) {
    if (!trace.recorded()) throw UsageError("backward called without a recorded forward pass");
    check_params(spec, params);
    if (output_grad.shape() != trace.output().shape()) {
        throw ArgumentError("output gradient shape " + shape_string(output_grad.shape()) + " does not match " +
                            shape_string(trace.output().shape()));
    }
    BackwardResult result{ModelParams::zeros(spec), Tensor()};
    Tensor grad = output_grad;
    for (std::size_t l = trace.to; l > trace.from; --l) {
        const auto& layer = spec.layer(l);
        const auto& in = trace.acts[l - trace.from - 1];
        const auto& out = trace.acts[l - trace.from];
        if (layer.activation == Activation::relu) {
            auto g = grad.values();
            auto o = out.values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(o[i] > 0.0)) g[i] = 0.0;
            }
        }
        ParamBlock* sink = trainable.contains(l) ? &result.grads.block(l) : nullptr;
        switch (layer.kind) {
            case LayerKind::conv2d:
                grad = conv_backward(layer, params.block(l), in, grad, sink);
                break;
            case LayerKind::flatten:
                grad = grad.reshaped(in.shape());
                break;
            case LayerKind::dense:
                grad = dense_backward(params.block(l), in, grad, sink);
                break;
        }
    }
    result.input_grad = std::move(grad);
    return result;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    std::vector<std::size_t> out;
    out.reserve(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        out.push_back(static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    return out;
}

}  // namespace fedd2s
