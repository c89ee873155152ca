#pragma once

#include "fedd2s/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedd2s {

enum class Activation { none, relu };
enum class LayerKind { conv2d, flatten, dense };

/// One entry of a sequential stack. Conv layers work on (H, W, C) samples.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t units = 0;  // out channels for conv2d, neurons for dense
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Activation activation = Activation::relu;

    static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0,
                          Activation act = Activation::relu);
    static LayerSpec flat();
    static LayerSpec dense(std::size_t units, Activation act = Activation::relu);

    bool has_params() const noexcept { return kind != LayerKind::flatten; }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Layers are addressed 1..L; index 0 denotes the model input.
class ModelSpec {
public:
    ModelSpec() = default;
    /// Validates the stack against the per-sample input shape and throws
    /// ConfigError when consecutive layers do not fit.
    ModelSpec(Shape input_shape, std::vector<LayerSpec> layers);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::size_t depth() const noexcept { return layers_.size(); }
    const LayerSpec& layer(std::size_t l) const;
    /// Per-sample output shape of layer l; l = 0 gives the input shape.
    const Shape& output_shape(std::size_t l) const;
    std::size_t num_classes() const;

    /// Short names used in configs and logs: C1.., F1.., "flatten".
    std::string layer_name(std::size_t l) const;
    std::optional<std::size_t> find_layer(const std::string& name) const;
    std::size_t parameter_count() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_;  // shapes_[l] = output shape of layer l
};

/// Conv widths 8/16/32 and dense widths 32/16/classes, flatten in between.
ModelSpec make_m1(Shape input_shape, std::size_t num_classes);
/// Conv widths 16/64/128 and dense widths 128/32/classes.
ModelSpec make_m2(Shape input_shape, std::size_t num_classes);
/// Small conv stack for desk-scale runs on tiny inputs (4/8/8 channels, 16/8/classes units).
ModelSpec make_desk(Shape input_shape, std::size_t num_classes);
/// Parses "conv:8:3:1:1 flatten dense:16 dense:4" (conv:channels:kernel:stride:padding).
/// The last layer gets no activation.
ModelSpec parse_architecture(const std::string& text, Shape input_shape);
std::string format_architecture(const ModelSpec& spec);

struct ParamBlock {
    Tensor weight;  // conv: (k, k, in, out); dense: (in, out)
    Tensor bias;    // (out)

    friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Inclusive 1-based layer interval. Empty when first > last.
struct LayerRange {
    std::size_t first = 1;
    std::size_t last = 0;

    bool contains(std::size_t l) const noexcept { return l >= first && l <= last; }
    bool empty() const noexcept { return first > last; }
    static LayerRange all(const ModelSpec& spec) { return {1, spec.depth()}; }
    static LayerRange none() { return {1, 0}; }
};

/// One block per layer; flatten layers hold empty tensors.
class ModelParams {
public:
    ModelParams() = default;
    /// Zero-filled parameters shaped for `spec`.
    static ModelParams zeros(const ModelSpec& spec);
    /// He-uniform weights drawn from `seed`, zero biases.
    static ModelParams he_uniform(const ModelSpec& spec, std::uint64_t seed);

    std::size_t depth() const noexcept { return blocks_.size(); }
    ParamBlock& block(std::size_t l) { return blocks_.at(l - 1); }
    const ParamBlock& block(std::size_t l) const { return blocks_.at(l - 1); }
    std::vector<ParamBlock>& blocks() noexcept { return blocks_; }
    const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }

    std::size_t parameter_count() const;
    bool same_shape(const ModelParams& other) const;
    /// Parameters of `other` on `range`, this model elsewhere.
    void assign_range(const ModelParams& other, LayerRange range);
    bool range_equal(const ModelParams& other, LayerRange range) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    std::vector<ParamBlock> blocks_;
};

/// Activations recorded while applying layers from+1..to to a batch.
/// acts[0] is the batch fed in, acts[k] the (post-activation) output of layer from+k.
struct ForwardTrace {
    std::size_t from = 0;
    std::size_t to = 0;
    std::vector<Tensor> acts;

    bool recorded() const noexcept { return !acts.empty(); }
    const Tensor& output() const { return acts.back(); }
};

struct BackwardResult {
    ModelParams grads;  // zero outside the trainable range
    Tensor input_grad;  // gradient w.r.t. acts[0]
};

/// Applies layers from+1..to to a batch shaped (B, output_shape(from)...).
Tensor forward_range(const ModelSpec& spec, const ModelParams& params, const Tensor& input, std::size_t from,
                     std::size_t to);
ForwardTrace trace_range(const ModelSpec& spec, const ModelParams& params, const Tensor& input, std::size_t from,
                         std::size_t to);

/// Output of layer l (1 <= l <= L) for a batch of model inputs.
Tensor forward_prefix(const ModelSpec& spec, const ModelParams& params, const Tensor& x, std::size_t l);
/// Logits from a batch of layer-l outputs; layers l+1..L. l = L is the identity.
Tensor forward_suffix(const ModelSpec& spec, const ModelParams& params, const Tensor& h, std::size_t l);
Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& x);

/// Backpropagates `output_grad` through the recorded layers. Parameter
/// gradients are accumulated only for layers inside `trainable`; the input
/// gradient always flows through every recorded layer.
BackwardResult backward(const ModelSpec& spec, const ModelParams& params, const ForwardTrace& trace,
                        const Tensor& output_grad, LayerRange trainable);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace fedd2s
