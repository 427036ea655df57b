#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vipnet/bound.hpp"
#include "vipnet/network.hpp"
#include "vipnet/report.hpp"
#include "vipnet/rng.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

/// Generator settings for the verification campaign's random conv stacks.
/// Spatial dims stay even: the theorem's reduction halves H and W exactly,
/// and an odd edge would drag virtual border windows into the error that the
/// statement does not model.
struct RandomNetOptions {
    int min_convs = 2;
    int max_convs = 4;
    int min_channels = 2;
    int max_channels = 4;
    std::vector<int> kernels = {1, 3, 5};
    std::vector<int> spatial = {6, 8, 10, 12};
    bool maybe_relu = true;  // half the nets get interleaved ReLUs
};

struct RandomNetCase {
    Network net;
    Tensor input;
    int vip_layer = 0;
    int observe_layer = 0;
};

inline RandomNetCase make_random_conv_net(std::mt19937& gen, const RandomNetOptions& opts = {}) {
    const int n_convs = uniform_int(gen, opts.min_convs, opts.max_convs);
    const int h = opts.spatial[static_cast<std::size_t>(
        uniform_int(gen, 0, static_cast<int>(opts.spatial.size()) - 1))];
    const int w = opts.spatial[static_cast<std::size_t>(
        uniform_int(gen, 0, static_cast<int>(opts.spatial.size()) - 1))];
    const bool with_relu = opts.maybe_relu && uniform_int(gen, 0, 1) == 1;

    std::vector<LayerSpec> layers;
    int in_c = uniform_int(gen, opts.min_channels, opts.max_channels);
    const int input_c = in_c;
    for (int l = 0; l < n_convs; ++l) {
        const int out_c = uniform_int(gen, opts.min_channels, opts.max_channels);
        const int m = opts.kernels[static_cast<std::size_t>(
            uniform_int(gen, 0, static_cast<int>(opts.kernels.size()) - 1))];
        ConvFilter f;
        f.weights = Tensor({out_c, in_c, m, m});
        const float bound = 1.0f / std::sqrt(static_cast<float>(in_c * m * m));
        for (float& v : f.weights.data) v = uniform_sym(gen, bound);
        f.bias.resize(static_cast<std::size_t>(out_c));
        for (float& b : f.bias) b = uniform_sym(gen, 0.1f);
        f.stride = 1;
        f.pad = same_padding(m);
        layers.push_back(ConvLayer{std::move(f), false});
        if (with_relu) layers.push_back(ReluLayer{});
        in_c = out_c;
    }

    RandomNetCase c{Network({input_c, h, w}, std::move(layers)), Tensor({input_c, h, w}), 0, 0};
    for (float& v : c.input.data) v = normal01(gen);
    c.vip_layer = uniform_int(gen, 0, n_convs - 1);
    c.observe_layer = uniform_int(gen, c.vip_layer, n_convs - 1);
    return c;
}

struct BoundCampaignResult {
    std::vector<BoundTrial> trials;
    int violations = 0;
    // Filled only when a violation forced the alternate-norm rerun.
    std::vector<BoundTrial> sum_norm_reruns;
};

/// Runs `trials` independent verification cases; a trial that violates the
/// bound under the RMS filter norm is rerun with the conventional sum norm
/// and both records are kept, never dropped.
inline BoundCampaignResult run_bound_campaign(unsigned seed, int trials,
                                              FilterNormKind norm = FilterNormKind::Rms,
                                              const RandomNetOptions& net_opts = {}) {
    BoundCampaignResult result;
    for (int t = 0; t < trials; ++t) {
        const unsigned trial_seed = seed + static_cast<unsigned>(t);
        std::mt19937 gen(trial_seed);
        const RandomNetCase c = make_random_conv_net(gen, net_opts);
        VerifyOptions vo;
        vo.norm = norm;
        BoundTrial trial;
        trial.seed = trial_seed;
        trial.vip_layer = c.vip_layer;
        trial.observe_layer = c.observe_layer;
        trial.result = verify_bound(c.net, c.vip_layer, c.input, c.observe_layer, vo);
        if (trial.result.holds && !*trial.result.holds) {
            ++result.violations;
            if (norm == FilterNormKind::Rms) {
                VerifyOptions rerun = vo;
                rerun.norm = FilterNormKind::Sum;
                BoundTrial again = trial;
                again.result = verify_bound(c.net, c.vip_layer, c.input, c.observe_layer, rerun);
                result.sum_norm_reruns.push_back(again);
            }
        }
        result.trials.push_back(trial);
    }
    return result;
}

}  // namespace vipnet
