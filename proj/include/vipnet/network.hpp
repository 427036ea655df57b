#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "vipnet/conv.hpp"
#include "vipnet/layers.hpp"
#include "vipnet/tensor.hpp"
#include "vipnet/threading.hpp"
#include "vipnet/vip.hpp"

namespace vipnet {

struct ConvLayer {
    ConvFilter filter;
    bool vip = false;
};

struct ReluLayer {};
struct MaxPoolLayer {};

struct DenseLayer {
    Tensor weights;  // [out, in]
    std::vector<float> bias;
};

struct SoftmaxLayer {};

using LayerSpec = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, DenseLayer, SoftmaxLayer>;

/// Per-layer cache from a traced forward pass, as consumed by the trainer.
/// A ViP conv layer that is directly followed by a ReLU absorbs it (the ReLU
/// runs on the reduced map before interpolation, which is where a ViP layer
/// sits in the original network order); the absorbed ReLU gets no step of its
/// own.
struct TraceStep {
    int layer_index = 0;
    bool fused_relu = false;
    Tensor input;
    Tensor output;
    ReducedMap reduced;                   // ViP conv: post-ReLU reduced map
    std::vector<std::uint8_t> relu_mask;  // ReLU or fused ViP conv
    std::vector<int> pool_argmax;         // maxpool
};

class Network {
public:
    Network(std::array<int, 3> input_shape, std::vector<LayerSpec> layers)
        : input_shape_(input_shape), layers_(std::move(layers)) {
        validate();
    }

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::vector<LayerSpec>& layers() { return layers_; }
    std::array<int, 3> input_shape() const { return input_shape_; }

    int conv_count() const {
        int n = 0;
        for (const auto& l : layers_) {
            if (std::holds_alternative<ConvLayer>(l)) ++n;
        }
        return n;
    }

    /// Positions of conv layers in the layer list, in network order. Conv
    /// layers are addressed everywhere by their ordinal in this list.
    std::vector<int> conv_positions() const {
        std::vector<int> pos;
        for (int i = 0; i < static_cast<int>(layers_.size()); ++i) {
            if (std::holds_alternative<ConvLayer>(layers_[i])) pos.push_back(i);
        }
        return pos;
    }

    ConvLayer& conv(int ordinal) {
        return std::get<ConvLayer>(layers_[static_cast<std::size_t>(conv_position(ordinal))]);
    }
    const ConvLayer& conv(int ordinal) const {
        return std::get<ConvLayer>(layers_[static_cast<std::size_t>(conv_position(ordinal))]);
    }

    void set_vip(int ordinal, bool enabled) { conv(ordinal).vip = enabled; }

    void set_vip_only(const std::vector<int>& ordinals) {
        for (int i = 0; i < conv_count(); ++i) set_vip(i, false);
        for (int o : ordinals) set_vip(o, true);
    }

    std::vector<int> vip_ordinals() const {
        std::vector<int> on;
        for (int i = 0; i < conv_count(); ++i) {
            if (conv(i).vip) on.push_back(i);
        }
        return on;
    }

    /// True when the next layer after this conv, skipping ReLUs, is a maxpool.
    bool precedes_pooling(int ordinal) const {
        std::size_t i = static_cast<std::size_t>(conv_position(ordinal)) + 1;
        while (i < layers_.size() && std::holds_alternative<ReluLayer>(layers_[i])) ++i;
        return i < layers_.size() && std::holds_alternative<MaxPoolLayer>(layers_[i]);
    }

    Tensor forward(const Tensor& input, int threads = 1) const {
        check_input(input);
        Tensor x = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (const auto* c = std::get_if<ConvLayer>(&layers_[i])) {
                if (!c->vip) {
                    x = conv_forward(x, c->filter, threads);
                } else {
                    ReducedMap red = reduced_conv(x, c->filter, threads);
                    if (i + 1 < layers_.size() && std::holds_alternative<ReluLayer>(layers_[i + 1])) {
                        relu_inplace(red.map);
                        ++i;
                    }
                    x = interpolate_fast(red);
                }
            } else if (std::holds_alternative<ReluLayer>(layers_[i])) {
                relu_inplace(x);
            } else if (std::holds_alternative<MaxPoolLayer>(layers_[i])) {
                x = maxpool2x2_forward(x);
            } else if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
                x = dense_forward(x, d->weights, d->bias);
            } else {
                x = softmax(x);
            }
        }
        return x;
    }

    /// Forward pass recording everything backward() needs.
    std::vector<TraceStep> forward_traced(const Tensor& input, int threads = 1) const {
        check_input(input);
        std::vector<TraceStep> trace;
        trace.reserve(layers_.size());
        Tensor x = input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            TraceStep step;
            step.layer_index = static_cast<int>(i);
            step.input = x;
            if (const auto* c = std::get_if<ConvLayer>(&layers_[i])) {
                if (!c->vip) {
                    x = conv_forward(x, c->filter, threads);
                } else {
                    ReducedMap red = reduced_conv(x, c->filter, threads);
                    if (i + 1 < layers_.size() && std::holds_alternative<ReluLayer>(layers_[i + 1])) {
                        step.fused_relu = true;
                        step.relu_mask = relu_mask(red.map);
                        relu_inplace(red.map);
                        ++i;
                    }
                    x = interpolate_fast(red);
                    step.reduced = std::move(red);
                }
            } else if (std::holds_alternative<ReluLayer>(layers_[i])) {
                step.relu_mask = relu_mask(x);
                relu_inplace(x);
            } else if (std::holds_alternative<MaxPoolLayer>(layers_[i])) {
                x = maxpool2x2_forward(x, &step.pool_argmax);
            } else if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
                x = dense_forward(x, d->weights, d->bias);
            } else {
                x = softmax(x);
            }
            step.output = x;
            trace.push_back(std::move(step));
        }
        return trace;
    }

    int predict(const Tensor& input, int threads = 1) const {
        return argmax_index(forward(input, threads));
    }

    /// Conv, interpolation, and dense arithmetic only; comparisons (ReLU,
    /// maxpool) and the softmax are not counted.
    long long flops() const {
        long long total = 0;
        std::array<int, 3> s = input_shape_;
        for (const auto& l : layers_) {
            if (const auto* c = std::get_if<ConvLayer>(&l)) {
                const int oh = conv_out_extent(s[1], c->filter.kernel(), c->filter.stride, c->filter.pad);
                const int ow = conv_out_extent(s[2], c->filter.kernel(), c->filter.stride, c->filter.pad);
                if (c->vip) {
                    total += reduced_conv_flops(c->filter, oh, ow) +
                             interp_flops(c->filter.out_channels(), oh, ow);
                } else {
                    total += conv_flops(c->filter, oh, ow);
                }
                s = {c->filter.out_channels(), oh, ow};
            } else if (std::holds_alternative<MaxPoolLayer>(l)) {
                s = {s[0], s[1] / 2, s[2] / 2};
            } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
                total += 2LL * d->weights.shape[0] * d->weights.shape[1];
                s = {d->weights.shape[0], 1, 1};
            }
        }
        return total;
    }

    /// Output shape of each layer given the declared input shape, ignoring
    /// ViP flags (interpolation restores shapes, so flags cannot change them).
    std::vector<std::array<int, 3>> layer_shapes() const {
        std::vector<std::array<int, 3>> shapes;
        std::array<int, 3> s = input_shape_;
        for (const auto& l : layers_) {
            s = apply_shape(l, s, shapes.size());
            shapes.push_back(s);
        }
        return shapes;
    }

private:
    std::array<int, 3> input_shape_;
    std::vector<LayerSpec> layers_;

    int conv_position(int ordinal) const {
        const std::vector<int> pos = conv_positions();
        if (ordinal < 0 || ordinal >= static_cast<int>(pos.size())) {
            throw ShapeError("conv ordinal " + std::to_string(ordinal) + " out of range (" +
                             std::to_string(pos.size()) + " conv layers)");
        }
        return pos[static_cast<std::size_t>(ordinal)];
    }

    void check_input(const Tensor& x) const {
        if (x.rank() != 3 || x.shape[0] != input_shape_[0] || x.shape[1] != input_shape_[1] ||
            x.shape[2] != input_shape_[2]) {
            throw ShapeError("network expects input [" + std::to_string(input_shape_[0]) + "," +
                             std::to_string(input_shape_[1]) + "," + std::to_string(input_shape_[2]) +
                             "], got " + x.shape_str());
        }
    }

    std::array<int, 3> apply_shape(const LayerSpec& l, std::array<int, 3> s, std::size_t idx) const {
        if (const auto* c = std::get_if<ConvLayer>(&l)) {
            c->filter.validate();
            if (c->filter.in_channels() != s[0]) {
                throw ShapeError("layer " + std::to_string(idx) + ": conv expects " +
                                 std::to_string(c->filter.in_channels()) + " input channels, gets " +
                                 std::to_string(s[0]));
            }
            const int oh = conv_out_extent(s[1], c->filter.kernel(), c->filter.stride, c->filter.pad);
            const int ow = conv_out_extent(s[2], c->filter.kernel(), c->filter.stride, c->filter.pad);
            return {c->filter.out_channels(), oh, ow};
        }
        if (std::holds_alternative<MaxPoolLayer>(l)) {
            if (s[1] % 2 != 0 || s[2] % 2 != 0) {
                throw ShapeError("layer " + std::to_string(idx) + ": maxpool needs even dims, gets " +
                                 std::to_string(s[1]) + "x" + std::to_string(s[2]));
            }
            return {s[0], s[1] / 2, s[2] / 2};
        }
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            if (d->weights.rank() != 2) {
                throw ShapeError("layer " + std::to_string(idx) + ": dense weights must be rank 2");
            }
            const long long flat = static_cast<long long>(s[0]) * s[1] * s[2];
            if (flat != d->weights.shape[1]) {
                throw ShapeError("layer " + std::to_string(idx) + ": dense expects " +
                                 std::to_string(d->weights.shape[1]) + " inputs, gets " +
                                 std::to_string(flat));
            }
            if (d->bias.size() != static_cast<std::size_t>(d->weights.shape[0])) {
                throw ShapeError("layer " + std::to_string(idx) + ": dense bias size mismatch");
            }
            return {d->weights.shape[0], 1, 1};
        }
        return s;  // relu / softmax keep shape
    }

    void validate() const {
        if (input_shape_[0] < 1 || input_shape_[1] < 1 || input_shape_[2] < 1) {
            throw ShapeError("invalid network input shape");
        }
        std::array<int, 3> s = input_shape_;
        for (std::size_t i = 0; i < layers_.size(); ++i) s = apply_shape(layers_[i], s, i);
    }
};

/// Top-1 accuracy over paired images/labels. Samples are independent, so the
/// loop parallelizes over fixed chunks with a deterministic tally.
inline double evaluate(const Network& net, const std::vector<Tensor>& images,
                       const std::vector<int>& labels, int threads = 1) {
    if (images.size() != labels.size()) throw ShapeError("evaluate: images/labels length mismatch");
    if (images.empty()) throw ShapeError("evaluate: empty dataset");
    std::vector<int> hits(images.size(), 0);
    parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            hits[k] = net.predict(images[k]) == labels[k] ? 1 : 0;
        }
    });
    long long total = 0;
    for (int h : hits) total += h;
    return static_cast<double>(total) / static_cast<double>(images.size());
}

}  // namespace vipnet
