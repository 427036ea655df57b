#pragma once

#include <string>
#include <vector>

#include "vipnet/tensor.hpp"
#include "vipnet/threading.hpp"

namespace vipnet {

/// Square odd-sized convolution filter bank with per-output-channel bias.
/// Weights are [out_channels, in_channels, M, M].
struct ConvFilter {
    Tensor weights;
    std::vector<float> bias;
    int stride = 1;
    int pad = 0;

    ConvFilter() = default;

    ConvFilter(Tensor w, std::vector<float> b, int stride_, int pad_)
        : weights(std::move(w)), bias(std::move(b)), stride(stride_), pad(pad_) {
        validate();
    }

    int out_channels() const { return weights.shape[0]; }
    int in_channels() const { return weights.shape[1]; }
    int kernel() const { return weights.shape[2]; }

    void validate() const {
        if (weights.rank() != 4) {
            throw ShapeError("conv weights must be rank 4, got " + weights.shape_str());
        }
        if (weights.shape[2] != weights.shape[3]) {
            throw ShapeError("conv kernel must be square, got " + weights.shape_str());
        }
        if (weights.shape[2] % 2 == 0) {
            throw ShapeError("conv kernel size must be odd, got " +
                             std::to_string(weights.shape[2]));
        }
        if (bias.size() != static_cast<std::size_t>(weights.shape[0])) {
            throw ShapeError("conv bias length " + std::to_string(bias.size()) +
                             " does not match out channels " + std::to_string(weights.shape[0]));
        }
        if (stride < 1) throw ShapeError("conv stride must be >= 1");
        if (pad < 0) throw ShapeError("conv padding must be >= 0");
    }
};

/// "Same"-style padding that keeps spatial size under stride 1.
inline int same_padding(int kernel) { return (kernel - 1) / 2; }

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
    int span = in + 2 * pad - kernel;
    if (span < 0) {
        throw ShapeError("conv window " + std::to_string(kernel) + " exceeds padded extent " +
                         std::to_string(in + 2 * pad));
    }
    return span / stride + 1;
}

inline void check_conv_input(const Tensor& input, const ConvFilter& f) {
    if (input.rank() != 3) {
        throw ShapeError("conv input must be rank 3 [C,H,W], got " + input.shape_str());
    }
    if (input.shape[0] != f.in_channels()) {
        throw ShapeError("conv input channels " + std::to_string(input.shape[0]) +
                         " do not match filter in channels " + std::to_string(f.in_channels()));
    }
}

/// Convolution evaluated on an explicit output grid: output (a, b) reads the
/// input window whose top-left corner is (row0 + a*row_step, col0 + b*col_step).
/// Taps outside the image read zero. conv_forward and the stride-doubled
/// reduced convolution are both instances of this grid.
inline Tensor conv_grid(const Tensor& input, const ConvFilter& f, int row0, int col0,
                        int row_step, int col_step, int out_h, int out_w, int threads = 1) {
    check_conv_input(input, f);
    const int ic = f.in_channels(), oc = f.out_channels(), m = f.kernel();
    const int in_h = input.shape[1], in_w = input.shape[2];
    Tensor out({oc, out_h, out_w});

    parallel_for(oc, threads, [&](long long c0, long long c1) {
        for (int co = static_cast<int>(c0); co < c1; ++co) {
            for (int a = 0; a < out_h; ++a) {
                const int y0 = row0 + a * row_step;
                for (int b = 0; b < out_w; ++b) {
                    const int x0 = col0 + b * col_step;
                    float acc = 0.0f;
                    for (int c = 0; c < ic; ++c) {
                        for (int u = 0; u < m; ++u) {
                            const int y = y0 + u;
                            if (y < 0 || y >= in_h) continue;
                            for (int v = 0; v < m; ++v) {
                                const int x = x0 + v;
                                if (x < 0 || x >= in_w) continue;
                                acc += input.at(c, y, x) * f.weights.at4(co, c, u, v);
                            }
                        }
                    }
                    out.at(co, a, b) = acc + f.bias[co];
                }
            }
        }
    });
    return out;
}

/// Standard strided convolution with zero padding.
/// Output is [C', (H+2p-M)/s + 1, (W+2p-M)/s + 1].
inline Tensor conv_forward(const Tensor& input, const ConvFilter& f, int threads = 1) {
    check_conv_input(input, f);
    const int oh = conv_out_extent(input.shape[1], f.kernel(), f.stride, f.pad);
    const int ow = conv_out_extent(input.shape[2], f.kernel(), f.stride, f.pad);
    return conv_grid(input, f, -f.pad, -f.pad, f.stride, f.stride, oh, ow, threads);
}

struct ConvGrads {
    Tensor input;
    Tensor weights;
    std::vector<float> bias;
};

/// Gradients of conv_grid with respect to input, weights, and bias.
inline ConvGrads conv_grid_backward(const Tensor& input, const ConvFilter& f, const Tensor& d_out,
                                    int row0, int col0, int row_step, int col_step) {
    check_conv_input(input, f);
    const int ic = f.in_channels(), oc = f.out_channels(), m = f.kernel();
    const int in_h = input.shape[1], in_w = input.shape[2];
    const int out_h = d_out.shape[1], out_w = d_out.shape[2];

    ConvGrads g;
    g.input = Tensor(input.shape);
    g.weights = Tensor(f.weights.shape);
    g.bias.assign(oc, 0.0f);

    for (int co = 0; co < oc; ++co) {
        for (int a = 0; a < out_h; ++a) {
            const int y0 = row0 + a * row_step;
            for (int b = 0; b < out_w; ++b) {
                const int x0 = col0 + b * col_step;
                const float go = d_out.at(co, a, b);
                g.bias[co] += go;
                for (int c = 0; c < ic; ++c) {
                    for (int u = 0; u < m; ++u) {
                        const int y = y0 + u;
                        if (y < 0 || y >= in_h) continue;
                        for (int v = 0; v < m; ++v) {
                            const int x = x0 + v;
                            if (x < 0 || x >= in_w) continue;
                            g.weights.at4(co, c, u, v) += go * input.at(c, y, x);
                            g.input.at(c, y, x) += go * f.weights.at4(co, c, u, v);
                        }
                    }
                }
            }
        }
    }
    return g;
}

/// FLOPs of a convolution producing an out_h x out_w map per output channel;
/// one multiply-accumulate counts as 2, bias adds excluded.
inline long long conv_flops(const ConvFilter& f, int out_h, int out_w) {
    return 2LL * f.out_channels() * f.in_channels() * f.kernel() * f.kernel() * out_h * out_w;
}

}  // namespace vipnet
