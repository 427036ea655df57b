#pragma once

#include <array>

#include "vipnet/network.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

namespace detail {

inline ConvLayer make_conv3x3(int in_c, int out_c) {
    ConvFilter f;
    f.weights = Tensor({out_c, in_c, 3, 3});
    f.bias.assign(static_cast<std::size_t>(out_c), 0.0f);
    f.stride = 1;
    f.pad = same_padding(3);
    return ConvLayer{std::move(f), false};
}

}  // namespace detail

/// The repo's desk-scale classifier: two conv-relu-maxpool blocks, a
/// conv-relu pair, and a dense softmax head. Spatial dims must be multiples
/// of 4. Weights start at zero; call init_weights before training.
inline Network make_reference_net(std::array<int, 3> input_shape, int classes) {
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h % 4 != 0 || w % 4 != 0) {
        throw ShapeError("reference net needs spatial dims divisible by 4");
    }
    std::vector<LayerSpec> layers;
    layers.push_back(detail::make_conv3x3(c, 8));
    layers.push_back(ReluLayer{});
    layers.push_back(MaxPoolLayer{});
    layers.push_back(detail::make_conv3x3(8, 12));
    layers.push_back(ReluLayer{});
    layers.push_back(MaxPoolLayer{});
    layers.push_back(detail::make_conv3x3(12, 16));
    layers.push_back(ReluLayer{});
    layers.push_back(detail::make_conv3x3(16, 16));
    layers.push_back(ReluLayer{});
    DenseLayer head;
    head.weights = Tensor({classes, 16 * (h / 4) * (w / 4)});
    head.bias.assign(static_cast<std::size_t>(classes), 0.0f);
    layers.push_back(std::move(head));
    layers.push_back(SoftmaxLayer{});
    return Network(input_shape, std::move(layers));
}

}  // namespace vipnet
