#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vipnet/tensor.hpp"

namespace vipnet {

inline Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

inline void relu_inplace(Tensor& t) {
    for (float& v : t.data) v = v > 0.0f ? v : 0.0f;
}

/// 1 where the pre-activation is strictly positive (subgradient 0 at 0).
inline std::vector<std::uint8_t> relu_mask(const Tensor& pre) {
    std::vector<std::uint8_t> m(pre.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = pre.data[i] > 0.0f ? 1 : 0;
    return m;
}

inline Tensor relu_backward(const Tensor& d_out, const std::vector<std::uint8_t>& mask) {
    Tensor d_in = d_out;
    for (std::size_t i = 0; i < d_in.data.size(); ++i) {
        if (!mask[i]) d_in.data[i] = 0.0f;
    }
    return d_in;
}

/// 2x2 max pooling with stride 2. Spatial dims must be even. When argmax is
/// given it receives, per output cell, the flat index of the winning input
/// element (first maximum in row-major window order).
inline Tensor maxpool2x2_forward(const Tensor& input, std::vector<int>* argmax = nullptr) {
    if (input.rank() != 3) throw ShapeError("maxpool expects rank-3 input, got " + input.shape_str());
    const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2x2 requires even spatial dims, got " + input.shape_str());
    }
    Tensor out({c, h / 2, w / 2});
    if (argmax) argmax->assign(out.size(), 0);
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h / 2; ++i) {
            for (int j = 0; j < w / 2; ++j) {
                float best = input.at(ch, 2 * i, 2 * j);
                int best_idx = (ch * h + 2 * i) * w + 2 * j;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const float v = input.at(ch, 2 * i + dy, 2 * j + dx);
                        if (v > best) {
                            best = v;
                            best_idx = (ch * h + 2 * i + dy) * w + 2 * j + dx;
                        }
                    }
                }
                out.at(ch, i, j) = best;
                if (argmax) (*argmax)[(ch * (h / 2) + i) * (w / 2) + j] = best_idx;
            }
        }
    }
    return out;
}

inline Tensor maxpool2x2_backward(const Tensor& d_out, const std::vector<int>& argmax,
                                  const std::vector<int>& input_shape) {
    Tensor d_in(input_shape);
    for (std::size_t k = 0; k < d_out.data.size(); ++k) {
        d_in.data[static_cast<std::size_t>(argmax[k])] += d_out.data[k];
    }
    return d_in;
}

/// Fully connected layer: flattens the input, weights are [out, in] row-major.
inline Tensor dense_forward(const Tensor& input, const Tensor& weights,
                            const std::vector<float>& bias) {
    if (weights.rank() != 2) throw ShapeError("dense weights must be rank 2, got " + weights.shape_str());
    const int out_n = weights.shape[0], in_n = weights.shape[1];
    if (static_cast<std::size_t>(in_n) != input.size()) {
        throw ShapeError("dense input size " + std::to_string(input.size()) + " != weight columns " +
                         std::to_string(in_n));
    }
    if (bias.size() != static_cast<std::size_t>(out_n)) {
        throw ShapeError("dense bias size mismatch");
    }
    Tensor out({out_n});
    for (int o = 0; o < out_n; ++o) {
        float acc = bias[o];
        const float* row = weights.data.data() + static_cast<std::size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) acc += row[i] * input.data[i];
        out.data[o] = acc;
    }
    return out;
}

/// Max-stabilized softmax over all entries.
inline Tensor softmax(const Tensor& logits) {
    Tensor out = logits;
    const float m = *std::max_element(out.data.begin(), out.data.end());
    float sum = 0.0f;
    for (float& v : out.data) {
        v = std::exp(v - m);
        sum += v;
    }
    for (float& v : out.data) v /= sum;
    return out;
}

/// Negative log-likelihood of the labeled class, clamped away from log(0).
inline float cross_entropy(const Tensor& probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw ShapeError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(probs.size()) + " classes");
    }
    return -std::log(std::max(probs.data[static_cast<std::size_t>(label)], 1e-12f));
}

inline int argmax_index(const Tensor& t) {
    return static_cast<int>(std::max_element(t.data.begin(), t.data.end()) - t.data.begin());
}

}  // namespace vipnet
