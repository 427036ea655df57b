#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <variant>

#include "vipnet/dataset.hpp"
#include "vipnet/network.hpp"
#include "vipnet/rng.hpp"
#include "vipnet/tensor.hpp"
#include "vipnet/trainer.hpp"
#include "vipnet/vip.hpp"

namespace {

using vipnet::ConvFilter;
using vipnet::ConvLayer;
using vipnet::DenseLayer;
using vipnet::Network;
using vipnet::ReducedMap;
using vipnet::Tensor;

double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a.data[i]) * b.data[i];
    }
    return acc;
}

TEST(InterpolateBackward, AdjointOfForward) {
    std::mt19937 gen(103);
    for (int trial = 0; trial < 60; ++trial) {
        const int c = vipnet::uniform_int(gen, 1, 2);
        const int th = vipnet::uniform_int(gen, 1, 10);
        const int tw = vipnet::uniform_int(gen, 1, 10);
        const int rh = (th + 1) / 2, rw = (tw + 1) / 2;
        Tensor x({c, rh, rw});
        for (float& v : x.data) v = vipnet::uniform_sym(gen, 1.0f);
        Tensor y({c, th, tw});
        for (float& v : y.data) v = vipnet::uniform_sym(gen, 1.0f);

        const Tensor fx = vipnet::interpolate_fast(ReducedMap(x, th, tw));
        const Tensor bty = vipnet::interpolate_backward(y, rh, rw);
        const double lhs = dot(fx, y);
        const double rhs = dot(x, bty);
        ASSERT_NEAR(lhs, rhs, 1e-6 * std::max(1.0, std::abs(lhs)))
            << "trial " << trial << " target " << th << "x" << tw;
    }
}

TEST(InterpolateBackward, ExplicitMatrixIsTheTranspose) {
    // 2x2 reduced to 4x4 target: build the 16x4 interpolation matrix K from
    // basis inputs and the 4x16 backward matrix from basis outputs.
    const int rh = 2, rw = 2, th = 4, tw = 4;
    float K[16][4];
    for (int ab = 0; ab < 4; ++ab) {
        Tensor e({1, rh, rw});
        e.data[static_cast<std::size_t>(ab)] = 1.0f;
        const Tensor col = vipnet::interpolate_fast(ReducedMap(e, th, tw));
        for (int ij = 0; ij < 16; ++ij) K[ij][ab] = col.data[static_cast<std::size_t>(ij)];
    }
    float B[4][16];
    for (int ij = 0; ij < 16; ++ij) {
        Tensor e({1, th, tw});
        e.data[static_cast<std::size_t>(ij)] = 1.0f;
        const Tensor row = vipnet::interpolate_backward(e, rh, rw);
        for (int ab = 0; ab < 4; ++ab) B[ab][ij] = row.data[static_cast<std::size_t>(ab)];
    }
    for (int ij = 0; ij < 16; ++ij) {
        for (int ab = 0; ab < 4; ++ab) {
            ASSERT_EQ(B[ab][ij], K[ij][ab]) << ij << "," << ab;
        }
    }
    // Every output pixel is a convex average: rows sum to exactly 1.
    for (int ij = 0; ij < 16; ++ij) {
        float row_sum = 0.0f;
        for (int ab = 0; ab < 4; ++ab) row_sum += K[ij][ab];
        ASSERT_EQ(row_sum, 1.0f) << "row " << ij;
    }
    // Column sums count how much each reduced entry feeds the output; the
    // top-left entry serves the whole cold border.
    const float want[4] = {6.25f, 3.75f, 3.75f, 2.25f};
    for (int ab = 0; ab < 4; ++ab) {
        float col_sum = 0.0f;
        for (int ij = 0; ij < 16; ++ij) col_sum += K[ij][ab];
        ASSERT_EQ(col_sum, want[ab]) << "column " << ab;
    }
    // Same column sums via one backward pass of an all-ones gradient.
    Tensor ones({1, th, tw});
    for (float& v : ones.data) v = 1.0f;
    const Tensor scattered = vipnet::interpolate_backward(ones, rh, rw);
    for (int ab = 0; ab < 4; ++ab) {
        ASSERT_EQ(scattered.data[static_cast<std::size_t>(ab)], want[ab]);
    }
}

ConvFilter gradcheck_filter(int ic, int oc) {
    ConvFilter f;
    f.weights = Tensor({oc, ic, 3, 3});
    f.bias.resize(static_cast<std::size_t>(oc));
    f.stride = 1;
    f.pad = 1;
    return f;
}

Network vip_first_net() {
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(ConvLayer{gradcheck_filter(1, 2), true});
    layers.push_back(vipnet::ReluLayer{});
    layers.push_back(ConvLayer{gradcheck_filter(2, 2), false});
    layers.push_back(vipnet::ReluLayer{});
    layers.push_back(DenseLayer{Tensor({2, 72}), std::vector<float>(2, 0.0f)});
    layers.push_back(vipnet::SoftmaxLayer{});
    return Network({1, 6, 6}, std::move(layers));
}

Network vip_after_pool_net() {
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(ConvLayer{gradcheck_filter(1, 2), false});
    layers.push_back(vipnet::ReluLayer{});
    layers.push_back(vipnet::MaxPoolLayer{});
    layers.push_back(ConvLayer{gradcheck_filter(2, 3), true});
    layers.push_back(vipnet::ReluLayer{});
    layers.push_back(DenseLayer{Tensor({2, 48}), std::vector<float>(2, 0.0f)});
    layers.push_back(vipnet::SoftmaxLayer{});
    return Network({1, 8, 8}, std::move(layers));
}

double loss_of(const Network& net, const Tensor& input, int label) {
    return vipnet::cross_entropy(net.forward(input), label);
}

void gradcheck(Network net, unsigned seed) {
    vipnet::init_weights(net, seed);
    // Fresh biases are exactly zero, which parks ReLU pre-activations right on
    // the kink wherever an input window is all zeros; central differences
    // average the two one-sided slopes there. Nudge every bias off zero so the
    // loss is differentiable at the evaluation point.
    std::mt19937 bgen(seed + 200);
    for (vipnet::LayerSpec& l : net.layers()) {
        if (auto* c = std::get_if<ConvLayer>(&l)) {
            for (float& b : c->filter.bias) b = 0.05f + 0.1f * vipnet::uniform01(bgen);
        } else if (auto* dl = std::get_if<DenseLayer>(&l)) {
            for (float& b : dl->bias) b = 0.05f + 0.1f * vipnet::uniform01(bgen);
        }
    }
    std::mt19937 gen(seed + 100);
    const auto shape = net.input_shape();
    Tensor input({shape[0], shape[1], shape[2]});
    for (float& v : input.data) v = vipnet::normal01(gen);
    const int label = 1;

    const vipnet::Gradients grads = vipnet::backward(net, {input}, {label});
    const float eps = 1e-3f;
    auto check = [&](double fd, double an, const std::string& where) {
        const double tol = std::max(1e-2 * std::max(std::abs(fd), std::abs(an)), 1e-4);
        ASSERT_NEAR(an, fd, tol) << where;
    };

    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        auto* conv = std::get_if<ConvLayer>(&net.layers()[li]);
        auto* dense = std::get_if<DenseLayer>(&net.layers()[li]);
        if (!conv && !dense) continue;
        Tensor& w = conv ? conv->filter.weights : dense->weights;
        std::vector<float>& b = conv ? conv->filter.bias : dense->bias;
        for (std::size_t k = 0; k < w.data.size(); ++k) {
            const float save = w.data[k];
            w.data[k] = save + eps;
            const double up = loss_of(net, input, label);
            w.data[k] = save - eps;
            const double down = loss_of(net, input, label);
            w.data[k] = save;
            check((up - down) / (2.0 * eps), grads.per_layer[li].weights.data[k],
                  "layer " + std::to_string(li) + " weight " + std::to_string(k));
        }
        for (std::size_t k = 0; k < b.size(); ++k) {
            const float save = b[k];
            b[k] = save + eps;
            const double up = loss_of(net, input, label);
            b[k] = save - eps;
            const double down = loss_of(net, input, label);
            b[k] = save;
            check((up - down) / (2.0 * eps), grads.per_layer[li].bias[k],
                  "layer " + std::to_string(li) + " bias " + std::to_string(k));
        }
    }

    // Input gradient too, a few entries.
    for (std::size_t k = 0; k < input.size(); k += 7) {
        const float save = input.data[k];
        input.data[k] = save + eps;
        const double up = loss_of(net, input, label);
        input.data[k] = save - eps;
        const double down = loss_of(net, input, label);
        input.data[k] = save;
        check((up - down) / (2.0 * eps), grads.input.data[k], "input " + std::to_string(k));
    }
}

TEST(Gradcheck, VipConvFirstThenPlainConv) { gradcheck(vip_first_net(), 21); }

TEST(Gradcheck, VipConvAfterMaxPool) { gradcheck(vip_after_pool_net(), 22); }

TEST(Backward, RequiresSoftmaxHead) {
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(DenseLayer{Tensor({2, 4}), std::vector<float>(2, 0.0f)});
    Network net({1, 2, 2}, std::move(layers));
    Tensor input({1, 2, 2});
    const auto trace = net.forward_traced(input);
    EXPECT_THROW(vipnet::backward_sample(net, trace, 0), vipnet::TrainingError);
}

TEST(Backward, RejectsBadLabel) {
    Network net = vip_first_net();
    vipnet::init_weights(net, 1);
    Tensor input({1, 6, 6});
    const auto trace = net.forward_traced(input);
    EXPECT_THROW(vipnet::backward_sample(net, trace, 5), vipnet::TrainingError);
    EXPECT_THROW(vipnet::backward_sample(net, trace, -1), vipnet::TrainingError);
}

TEST(RunBatch, RejectsEmptyOrMismatched) {
    Network net = vip_first_net();
    EXPECT_THROW(vipnet::run_batch(net, {}, {}), vipnet::TrainingError);
    Tensor img({1, 6, 6});
    EXPECT_THROW(vipnet::run_batch(net, {img}, {0, 1}), vipnet::TrainingError);
}

TEST(RunBatch, SameThreadCountIsBitwiseStable) {
    Network net = vip_after_pool_net();
    vipnet::init_weights(net, 31);
    std::mt19937 gen(32);
    std::vector<Tensor> images;
    std::vector<int> labels;
    for (int k = 0; k < 6; ++k) {
        Tensor img({1, 8, 8});
        for (float& v : img.data) v = vipnet::normal01(gen);
        images.push_back(std::move(img));
        labels.push_back(k % 2);
    }
    const vipnet::BatchResult a = vipnet::run_batch(net, images, labels, 3);
    const vipnet::BatchResult b = vipnet::run_batch(net, images, labels, 3);
    EXPECT_EQ(a.loss, b.loss);
    for (std::size_t li = 0; li < a.grads.per_layer.size(); ++li) {
        ASSERT_EQ(a.grads.per_layer[li].weights.data, b.grads.per_layer[li].weights.data);
        ASSERT_EQ(a.grads.per_layer[li].bias, b.grads.per_layer[li].bias);
    }
    // Across thread counts only the summation order changes.
    const vipnet::BatchResult c = vipnet::run_batch(net, images, labels, 1);
    EXPECT_NEAR(a.loss, c.loss, 1e-6 * std::max(1.0, std::abs(c.loss)));
    for (std::size_t li = 0; li < a.grads.per_layer.size(); ++li) {
        for (std::size_t k = 0; k < a.grads.per_layer[li].weights.data.size(); ++k) {
            ASSERT_NEAR(a.grads.per_layer[li].weights.data[k], c.grads.per_layer[li].weights.data[k],
                        1e-5f);
        }
    }
}

Network dense_only_net() {
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(DenseLayer{Tensor({1, 1}, {1.0f}), std::vector<float>(1, 0.0f)});
    return Network({1, 1, 1}, std::move(layers));
}

TEST(Sgd, PlainStepWithoutMomentum) {
    Network net = dense_only_net();
    vipnet::Gradients g = vipnet::make_gradients(net);
    g.per_layer[0].weights.data[0] = 2.0f;
    vipnet::SgdState state = vipnet::make_sgd_state(net);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 0.1f;
    cfg.momentum = 0.0f;
    vipnet::sgd_step(net, g, state, cfg);
    EXPECT_FLOAT_EQ(std::get<DenseLayer>(net.layers()[0]).weights.data[0], 0.8f);
}

TEST(Sgd, MomentumAccumulatesVelocity) {
    Network net = dense_only_net();
    vipnet::Gradients g = vipnet::make_gradients(net);
    g.per_layer[0].weights.data[0] = 2.0f;
    vipnet::SgdState state = vipnet::make_sgd_state(net);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 0.1f;
    cfg.momentum = 0.9f;
    vipnet::sgd_step(net, g, state, cfg);
    vipnet::sgd_step(net, g, state, cfg);
    // v1 = -0.2, v2 = 0.9*(-0.2) - 0.2 = -0.38, w = 1 - 0.2 - 0.38
    EXPECT_FLOAT_EQ(std::get<DenseLayer>(net.layers()[0]).weights.data[0], 0.42f);
}

TEST(Sgd, ZeroLearningRateLeavesWeights) {
    Network net = dense_only_net();
    vipnet::Gradients g = vipnet::make_gradients(net);
    g.per_layer[0].weights.data[0] = 2.0f;
    vipnet::SgdState state = vipnet::make_sgd_state(net);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 0.0f;
    cfg.momentum = 0.0f;
    vipnet::sgd_step(net, g, state, cfg);
    EXPECT_EQ(std::get<DenseLayer>(net.layers()[0]).weights.data[0], 1.0f);
}

TEST(Sgd, NonFiniteGradientThrows) {
    Network net = dense_only_net();
    vipnet::Gradients g = vipnet::make_gradients(net);
    g.per_layer[0].weights.data[0] = std::numeric_limits<float>::infinity();
    vipnet::SgdState state = vipnet::make_sgd_state(net);
    vipnet::TrainConfig cfg;
    EXPECT_THROW(vipnet::sgd_step(net, g, state, cfg), vipnet::TrainingError);
}

TEST(Sgd, SaturatedSoftmaxIsStationary) {
    // Bias gap 120 underflows the losing probability to exactly zero, so the
    // logit gradient is exactly the zero vector and a step changes nothing.
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(DenseLayer{Tensor({2, 2}), std::vector<float>{60.0f, -60.0f}});
    layers.push_back(vipnet::SoftmaxLayer{});
    Network net({1, 1, 2}, std::move(layers));
    Tensor input({1, 1, 2}, {0.1f, -0.1f});

    const vipnet::Gradients g = vipnet::backward(net, {input}, {0});
    for (float v : g.per_layer[0].weights.data) ASSERT_EQ(v, 0.0f);
    for (float v : g.per_layer[0].bias) ASSERT_EQ(v, 0.0f);

    const std::vector<float> before = std::get<DenseLayer>(net.layers()[0]).weights.data;
    vipnet::SgdState state = vipnet::make_sgd_state(net);
    vipnet::TrainConfig cfg;
    vipnet::sgd_step(net, g, state, cfg);
    EXPECT_EQ(std::get<DenseLayer>(net.layers()[0]).weights.data, before);
}

TEST(InitWeights, FanInBoundsAndDeterminism) {
    Network a = vip_first_net();
    Network b = vip_first_net();
    vipnet::init_weights(a, 77);
    vipnet::init_weights(b, 77);
    for (std::size_t li = 0; li < a.layers().size(); ++li) {
        if (auto* c = std::get_if<ConvLayer>(&a.layers()[li])) {
            const float bound = 1.0f / std::sqrt(static_cast<float>(
                                    c->filter.in_channels() * c->filter.kernel() * c->filter.kernel()));
            for (float w : c->filter.weights.data) {
                ASSERT_LE(std::abs(w), bound);
            }
            for (float bias : c->filter.bias) ASSERT_EQ(bias, 0.0f);
            ASSERT_EQ(c->filter.weights.data, std::get<ConvLayer>(b.layers()[li]).filter.weights.data);
        }
    }
    Network c = vip_first_net();
    vipnet::init_weights(c, 78);
    EXPECT_NE(std::get<ConvLayer>(a.layers()[0]).filter.weights.data,
              std::get<ConvLayer>(c.layers()[0]).filter.weights.data);
}

Network small_classifier() {
    std::vector<vipnet::LayerSpec> layers;
    layers.push_back(ConvLayer{gradcheck_filter(1, 4), false});
    layers.push_back(vipnet::ReluLayer{});
    layers.push_back(vipnet::MaxPoolLayer{});
    layers.push_back(DenseLayer{Tensor({2, 64}), std::vector<float>(2, 0.0f)});
    layers.push_back(vipnet::SoftmaxLayer{});
    return Network({1, 8, 8}, std::move(layers));
}

TEST(Train, SeedGivesBitwiseIdenticalRuns) {
    const vipnet::Dataset data = vipnet::gen_synthetic(51, 24, 2, 8, 8);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 0.05f;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = 9;

    Network a = small_classifier();
    vipnet::init_weights(a, 13);
    const vipnet::TrainResult ra = vipnet::train(a, data, data, cfg);

    Network b = small_classifier();
    vipnet::init_weights(b, 13);
    const vipnet::TrainResult rb = vipnet::train(b, data, data, cfg);

    ASSERT_EQ(ra.history.size(), rb.history.size());
    for (std::size_t e = 0; e < ra.history.size(); ++e) {
        EXPECT_EQ(ra.history[e].mean_loss, rb.history[e].mean_loss);
        EXPECT_EQ(ra.history[e].eval_accuracy, rb.history[e].eval_accuracy);
    }
    EXPECT_EQ(std::get<ConvLayer>(a.layers()[0]).filter.weights.data,
              std::get<ConvLayer>(b.layers()[0]).filter.weights.data);

    Network c = small_classifier();
    vipnet::init_weights(c, 13);
    vipnet::TrainConfig other = cfg;
    other.seed = 10;
    vipnet::train(c, data, data, other);
    EXPECT_NE(std::get<ConvLayer>(a.layers()[0]).filter.weights.data,
              std::get<ConvLayer>(c.layers()[0]).filter.weights.data);
}

TEST(Train, HistoryHasOneEntryPerEpoch) {
    const vipnet::Dataset data = vipnet::gen_synthetic(52, 16, 2, 8, 8);
    Network net = small_classifier();
    vipnet::init_weights(net, 14);
    vipnet::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    const vipnet::TrainResult r = vipnet::train(net, data, data, cfg);
    ASSERT_EQ(r.history.size(), 3u);
    for (const vipnet::EpochStats& s : r.history) {
        EXPECT_GE(s.eval_accuracy, 0.0);
        EXPECT_LE(s.eval_accuracy, 1.0);
        EXPECT_TRUE(std::isfinite(s.mean_loss));
    }
    EXPECT_EQ(r.final_accuracy(), r.history.back().eval_accuracy);
}

TEST(Train, ExplodingRateThrows) {
    const vipnet::Dataset data = vipnet::gen_synthetic(53, 8, 2, 8, 8);
    Network net = small_classifier();
    vipnet::init_weights(net, 15);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 1e30f;
    cfg.batch_size = 2;
    cfg.epochs = 4;
    EXPECT_THROW(vipnet::train(net, data, data, cfg), vipnet::TrainingError);
}

TEST(Train, RejectsBadConfig) {
    const vipnet::Dataset data = vipnet::gen_synthetic(54, 8, 2, 8, 8);
    Network net = small_classifier();
    vipnet::TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(vipnet::train(net, data, data, cfg), vipnet::TrainingError);
    cfg = {};
    cfg.learning_rate = 0.0f;
    EXPECT_THROW(vipnet::train(net, data, data, cfg), vipnet::TrainingError);
    vipnet::Dataset empty;
    empty.classes = 2;
    cfg = {};
    EXPECT_THROW(vipnet::train(net, empty, data, cfg), vipnet::TrainingError);
}

TEST(Train, SeparableOrientationsReachNinetyNine) {
    const vipnet::Dataset data = vipnet::gen_synthetic(55, 80, 2, 8, 8);
    Network net = small_classifier();
    vipnet::init_weights(net, 16);
    vipnet::TrainConfig cfg;
    cfg.learning_rate = 0.1f;
    cfg.batch_size = 8;
    cfg.epochs = 5;
    cfg.seed = 17;
    vipnet::train(net, data, data, cfg);
    const double train_acc = vipnet::evaluate(net, data.images, data.labels);
    EXPECT_GE(train_acc, 0.99);
}

TEST(Finetune, CutsEpochsToBudget) {
    const vipnet::Dataset data = vipnet::gen_synthetic(56, 16, 2, 8, 8);
    Network net = small_classifier();
    vipnet::init_weights(net, 18);
    vipnet::TrainConfig cfg;
    cfg.epochs = 50;
    const vipnet::TrainResult r = vipnet::finetune(net, data, data, cfg, 2);
    EXPECT_EQ(r.history.size(), 2u);
}

}  // namespace
