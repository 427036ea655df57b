#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vipnet/network.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

enum class FilterNormKind {
    Rms,  // sqrt(mean^2 + population std^2), identically the root mean square
    Sum,  // conventional l2 norm sqrt(sum w^2)
};

/// Norm of one output channel's weight set. The Rms route computes mean and
/// population variance literally; mean^2 + var = E[w^2] makes it the RMS.
inline double filter_norm(std::span<const float> w, FilterNormKind kind = FilterNormKind::Rms) {
    if (w.empty()) throw ShapeError("filter_norm on empty weight set");
    if (kind == FilterNormKind::Sum) {
        double sq = 0.0;
        for (float x : w) sq += static_cast<double>(x) * x;
        return std::sqrt(sq);
    }
    double mean = 0.0;
    for (float x : w) mean += x;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (float x : w) {
        const double d = static_cast<double>(x) - mean;
        var += d * d;
    }
    var /= static_cast<double>(w.size());
    return std::sqrt(mean * mean + var);
}

/// Max of filter_norm over the layer's output channels.
inline double max_filter_norm(const ConvFilter& f, FilterNormKind kind = FilterNormKind::Rms) {
    const std::size_t per_channel = static_cast<std::size_t>(f.in_channels()) * f.kernel() * f.kernel();
    double best = 0.0;
    for (int co = 0; co < f.out_channels(); ++co) {
        best = std::max(best, filter_norm({f.weights.data.data() + co * per_channel, per_channel}, kind));
    }
    return best;
}

/// Smallest constant L with |f(p1) - f(p2)| <= L*||p1 - p2|| across every
/// channel slice of the activation, on the discrete pixel grid. Exhaustive
/// mode checks all spatial pairs; the fast mode checks only axis-adjacent and
/// diagonal pairs and is a lower estimate. A 1x1 spatial map has no pairs
/// and yields 0.
inline double estimate_lipschitz(const Tensor& activation, bool exhaustive = true) {
    if (activation.rank() != 3) {
        throw ShapeError("estimate_lipschitz expects rank-3 activation, got " + activation.shape_str());
    }
    const int c = activation.shape[0], h = activation.shape[1], w = activation.shape[2];
    double best = 0.0;
    if (exhaustive) {
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < h * w; ++i) {
                const int y1 = i / w, x1 = i % w;
                const double f1 = activation.at(ch, y1, x1);
                for (int j = i + 1; j < h * w; ++j) {
                    const int y2 = j / w, x2 = j % w;
                    const double dy = y1 - y2, dx = x1 - x2;
                    const double ratio =
                        std::abs(f1 - activation.at(ch, y2, x2)) / std::sqrt(dy * dy + dx * dx);
                    if (ratio > best) best = ratio;
                }
            }
        }
        return best;
    }
    const double inv_diag = 1.0 / std::sqrt(2.0);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double f = activation.at(ch, y, x);
                if (x + 1 < w) best = std::max(best, std::abs(f - activation.at(ch, y, x + 1)));
                if (y + 1 < h) best = std::max(best, std::abs(f - activation.at(ch, y + 1, x)));
                if (y + 1 < h && x + 1 < w) {
                    best = std::max(best, std::abs(f - activation.at(ch, y + 1, x + 1)) * inv_diag);
                }
                if (y + 1 < h && x > 0) {
                    best = std::max(best, std::abs(f - activation.at(ch, y + 1, x - 1)) * inv_diag);
                }
            }
        }
    }
    return best;
}

/// Inputs of the error-bound formula for ViP at conv start_layer observed at
/// conv end_layer: per_layer covers each conv in (start_layer, end_layer]
/// in network order.
struct BoundInput {
    double lipschitz = 0.0;
    int start_layer = 0;
    int end_layer = 0;

    struct LayerTerm {
        int in_channels = 0;
        int kernel = 0;
        double filter_norm = 0.0;
    };
    std::vector<LayerTerm> per_layer;

    int out_channels = 0;
    int out_h = 0;
    int out_w = 0;

    void validate() const {
        if (lipschitz < 0.0) throw ShapeError("bound input: negative Lipschitz constant");
        if (start_layer > end_layer) throw ShapeError("bound input: start layer after end layer");
        if (static_cast<int>(per_layer.size()) != end_layer - start_layer) {
            throw ShapeError("bound input: need one term per layer after the insertion point");
        }
        if (out_channels < 1 || out_h < 1 || out_w < 1) throw ShapeError("bound input: bad output dims");
        for (const LayerTerm& t : per_layer) {
            if (t.in_channels < 1 || t.kernel < 1 || t.filter_norm < 0.0) {
                throw ShapeError("bound input: bad layer term");
            }
        }
    }
};

struct BoundResult {
    double bound = 0.0;
    double lipschitz = 0.0;
    std::optional<double> measured_error;
    std::optional<bool> holds;
};

/// sqrt(2) * L * sqrt(C'HW) * prod over succeeding layers of sqrt(C)*M*B.
/// The product is empty (1) when the observation layer is the insertion
/// layer itself.
inline BoundResult compute_bound(const BoundInput& in) {
    in.validate();
    double value = std::sqrt(2.0) * in.lipschitz *
                   std::sqrt(static_cast<double>(in.out_channels) * in.out_h * in.out_w);
    for (const BoundInput::LayerTerm& t : in.per_layer) {
        value *= std::sqrt(static_cast<double>(t.in_channels)) * t.kernel * t.filter_norm;
    }
    BoundResult r;
    r.bound = value;
    r.lipschitz = in.lipschitz;
    return r;
}

struct VerifyOptions {
    FilterNormKind norm = FilterNormKind::Rms;
    bool lipschitz_pre_relu = false;  // default: the post-ReLU map, the tensor interpolation acts on
    bool exhaustive_lipschitz = true;
    int threads = 1;
};

namespace detail {

/// Output of the conv unit at this ordinal including its trailing ReLU when
/// one exists, which is the symmetric observation point whether or not the
/// run fused that ReLU into a ViP step.
inline const Tensor& unit_output(const Network& net, const std::vector<TraceStep>& trace, int ordinal,
                                 bool include_relu) {
    const int pos = net.conv_positions().at(static_cast<std::size_t>(ordinal));
    const auto& layers = net.layers();
    const bool relu_follows = static_cast<std::size_t>(pos + 1) < layers.size() &&
                              std::holds_alternative<ReluLayer>(layers[static_cast<std::size_t>(pos + 1)]);
    for (std::size_t k = 0; k < trace.size(); ++k) {
        if (trace[k].layer_index != pos) continue;
        if (!include_relu || !relu_follows || trace[k].fused_relu) return trace[k].output;
        return trace[k + 1].output;  // the standalone ReLU step
    }
    throw ShapeError("conv ordinal " + std::to_string(ordinal) + " not found in trace");
}

}  // namespace detail

/// Runs the network with and without ViP at vip_layer, measures the l2
/// difference at observe_layer's output (after its ReLU when present, the
/// same point on both paths), and compares against the computed bound. L is
/// estimated from the exact run's activation at vip_layer.
inline BoundResult verify_bound(const Network& net, int vip_layer, const Tensor& input,
                                int observe_layer, const VerifyOptions& opts = {}) {
    const int n_conv = net.conv_count();
    if (vip_layer < 0 || observe_layer < vip_layer || observe_layer >= n_conv) {
        throw ShapeError("verify_bound: invalid conv ordinals " + std::to_string(vip_layer) + ", " +
                         std::to_string(observe_layer));
    }
    Network exact = net;
    exact.set_vip(vip_layer, false);
    Network vipped = net;
    vipped.set_vip(vip_layer, true);

    const std::vector<TraceStep> exact_trace = exact.forward_traced(input, opts.threads);
    const std::vector<TraceStep> vip_trace = vipped.forward_traced(input, opts.threads);

    const Tensor& obs_exact = detail::unit_output(exact, exact_trace, observe_layer, true);
    const Tensor& obs_vip = detail::unit_output(vipped, vip_trace, observe_layer, true);
    const Tensor& l_source =
        detail::unit_output(exact, exact_trace, vip_layer, !opts.lipschitz_pre_relu);

    BoundInput in;
    in.lipschitz = estimate_lipschitz(l_source, opts.exhaustive_lipschitz);
    in.start_layer = vip_layer;
    in.end_layer = observe_layer;
    for (int l = vip_layer + 1; l <= observe_layer; ++l) {
        const ConvFilter& f = net.conv(l).filter;
        in.per_layer.push_back({f.in_channels(), f.kernel(), max_filter_norm(f, opts.norm)});
    }
    in.out_channels = obs_exact.shape[0];
    in.out_h = obs_exact.shape[1];
    in.out_w = obs_exact.shape[2];

    BoundResult r = compute_bound(in);
    r.measured_error = static_cast<double>(l2_diff(obs_exact, obs_vip));
    r.holds = *r.measured_error <= r.bound;
    return r;
}

}  // namespace vipnet
