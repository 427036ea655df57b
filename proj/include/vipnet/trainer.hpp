#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "vipnet/dataset.hpp"
#include "vipnet/network.hpp"
#include "vipnet/rng.hpp"
#include "vipnet/threading.hpp"

namespace vipnet {

enum class WeightInit { FanInUniform };

struct TrainConfig {
    float learning_rate = 0.05f;
    float momentum = 0.9f;
    int batch_size = 16;
    int epochs = 10;
    unsigned seed = 1;
    int threads = 1;
    WeightInit init = WeightInit::FanInUniform;
};

/// Gradient (or velocity) storage mirroring the trainable parameters, indexed
/// by layer position; non-parameter layers keep empty slots.
struct LayerGrads {
    Tensor weights;
    std::vector<float> bias;
};

struct Gradients {
    std::vector<LayerGrads> per_layer;
    Tensor input;  // d loss / d network input

    void add(const Gradients& other) {
        for (std::size_t i = 0; i < per_layer.size(); ++i) {
            LayerGrads& a = per_layer[i];
            const LayerGrads& b = other.per_layer[i];
            for (std::size_t k = 0; k < a.weights.data.size(); ++k) a.weights.data[k] += b.weights.data[k];
            for (std::size_t k = 0; k < a.bias.size(); ++k) a.bias[k] += b.bias[k];
        }
        if (input.data.empty()) {
            input = other.input;
        } else {
            for (std::size_t k = 0; k < input.data.size(); ++k) input.data[k] += other.input.data[k];
        }
    }

    void scale(float s) {
        for (LayerGrads& g : per_layer) {
            for (float& v : g.weights.data) v *= s;
            for (float& v : g.bias) v *= s;
        }
        for (float& v : input.data) v *= s;
    }
};

inline Gradients make_gradients(const Network& net) {
    Gradients g;
    g.per_layer.resize(net.layers().size());
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        if (const auto* c = std::get_if<ConvLayer>(&net.layers()[i])) {
            g.per_layer[i].weights = Tensor(c->filter.weights.shape);
            g.per_layer[i].bias.assign(c->filter.bias.size(), 0.0f);
        } else if (const auto* d = std::get_if<DenseLayer>(&net.layers()[i])) {
            g.per_layer[i].weights = Tensor(d->weights.shape);
            g.per_layer[i].bias.assign(d->bias.size(), 0.0f);
        }
    }
    return g;
}

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0.
/// One generator pass in layer order keeps it reproducible.
inline void init_weights(Network& net, unsigned seed) {
    std::mt19937 gen(seed);
    for (LayerSpec& l : net.layers()) {
        if (auto* c = std::get_if<ConvLayer>(&l)) {
            const float bound = 1.0f / std::sqrt(static_cast<float>(
                                    c->filter.in_channels() * c->filter.kernel() * c->filter.kernel()));
            for (float& w : c->filter.weights.data) w = uniform_sym(gen, bound);
            for (float& b : c->filter.bias) b = 0.0f;
        } else if (auto* d = std::get_if<DenseLayer>(&l)) {
            const float bound = 1.0f / std::sqrt(static_cast<float>(d->weights.shape[1]));
            for (float& w : d->weights.data) w = uniform_sym(gen, bound);
            for (float& b : d->bias) b = 0.0f;
        }
    }
}

/// Backpropagation through one traced sample. The softmax head pairs with
/// cross-entropy, so the logit gradient is probs minus the one-hot label; a
/// ViP conv routes its output gradient through the interpolation transpose
/// (and the absorbed ReLU's mask) before the reduced-geometry conv backward.
inline Gradients backward_sample(const Network& net, const std::vector<TraceStep>& trace, int label) {
    const auto& layers = net.layers();
    if (trace.empty()) throw TrainingError("backward on empty trace");
    const TraceStep& last = trace.back();
    if (!std::holds_alternative<SoftmaxLayer>(layers[static_cast<std::size_t>(last.layer_index)])) {
        throw TrainingError("backward requires a softmax output layer");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= last.output.size()) {
        throw TrainingError("label " + std::to_string(label) + " out of range");
    }

    Gradients g = make_gradients(net);
    Tensor d = last.output;
    d.data[static_cast<std::size_t>(label)] -= 1.0f;

    for (int k = static_cast<int>(trace.size()) - 2; k >= 0; --k) {
        const TraceStep& step = trace[static_cast<std::size_t>(k)];
        const std::size_t li = static_cast<std::size_t>(step.layer_index);
        if (const auto* c = std::get_if<ConvLayer>(&layers[li])) {
            ConvGrads cg;
            if (c->vip) {
                Tensor d_red = interpolate_backward(d, step.reduced.reduced_h(), step.reduced.reduced_w());
                if (step.fused_relu) {
                    for (std::size_t i = 0; i < d_red.data.size(); ++i) {
                        if (!step.relu_mask[i]) d_red.data[i] = 0.0f;
                    }
                }
                cg = conv_grid_backward(step.input, c->filter, d_red, c->filter.stride - c->filter.pad,
                                        c->filter.stride - c->filter.pad, 2 * c->filter.stride,
                                        2 * c->filter.stride);
            } else {
                cg = conv_grid_backward(step.input, c->filter, d, -c->filter.pad, -c->filter.pad,
                                        c->filter.stride, c->filter.stride);
            }
            g.per_layer[li].weights = std::move(cg.weights);
            g.per_layer[li].bias = std::move(cg.bias);
            d = std::move(cg.input);
        } else if (std::holds_alternative<ReluLayer>(layers[li])) {
            d = relu_backward(d, step.relu_mask);
        } else if (std::holds_alternative<MaxPoolLayer>(layers[li])) {
            d = maxpool2x2_backward(d, step.pool_argmax, step.input.shape);
        } else if (const auto* dl = std::get_if<DenseLayer>(&layers[li])) {
            const int out_n = dl->weights.shape[0], in_n = dl->weights.shape[1];
            LayerGrads& lg = g.per_layer[li];
            Tensor d_in(step.input.shape);
            for (int o = 0; o < out_n; ++o) {
                const float go = d.data[static_cast<std::size_t>(o)];
                lg.bias[static_cast<std::size_t>(o)] = go;
                const float* row = dl->weights.data.data() + static_cast<std::size_t>(o) * in_n;
                float* wrow = lg.weights.data.data() + static_cast<std::size_t>(o) * in_n;
                for (int i = 0; i < in_n; ++i) {
                    wrow[i] = go * step.input.data[static_cast<std::size_t>(i)];
                    d_in.data[static_cast<std::size_t>(i)] += go * row[i];
                }
            }
            d = std::move(d_in);
        } else {
            throw TrainingError("softmax is only supported as the output layer");
        }
    }
    g.input = std::move(d);
    return g;
}

struct BatchResult {
    Gradients grads;  // mean over the batch
    double loss = 0.0;
};

/// Forward + backward over a batch; gradients and loss are batch means.
/// Parallel path accumulates per fixed contiguous chunk, then merges chunks
/// in index order, so results are deterministic for a given thread count.
inline BatchResult run_batch(const Network& net, const std::vector<Tensor>& images,
                             const std::vector<int>& labels, int threads = 1) {
    if (images.empty() || images.size() != labels.size()) {
        throw TrainingError("run_batch: bad batch");
    }
    const std::size_t n = images.size();
    const int nthreads = threads < 1 ? 1 : threads;
    const std::size_t chunk = (n + static_cast<std::size_t>(nthreads) - 1) / static_cast<std::size_t>(nthreads);
    const std::size_t nchunks = (n + chunk - 1) / chunk;

    std::vector<Gradients> partial(nchunks);
    std::vector<double> partial_loss(nchunks, 0.0);
    parallel_for(n, nthreads, [&](std::size_t begin, std::size_t end) {
        const std::size_t ci = begin / chunk;
        Gradients acc = make_gradients(net);
        double loss = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const std::vector<TraceStep> trace = net.forward_traced(images[k]);
            loss += cross_entropy(trace.back().output, labels[k]);
            acc.add(backward_sample(net, trace, labels[k]));
        }
        partial[ci] = std::move(acc);
        partial_loss[ci] = loss;
    });

    BatchResult r;
    r.grads = std::move(partial[0]);
    r.loss = partial_loss[0];
    for (std::size_t ci = 1; ci < nchunks; ++ci) {
        r.grads.add(partial[ci]);
        r.loss += partial_loss[ci];
    }
    r.grads.scale(1.0f / static_cast<float>(n));
    r.loss /= static_cast<double>(n);
    return r;
}

/// Spec-level entry point: mean gradients for a batch.
inline Gradients backward(const Network& net, const std::vector<Tensor>& batch,
                          const std::vector<int>& labels, int threads = 1) {
    return run_batch(net, batch, labels, threads).grads;
}

struct SgdState {
    std::vector<LayerGrads> velocity;
};

inline SgdState make_sgd_state(const Network& net) { return {make_gradients(net).per_layer}; }

/// Momentum SGD: v = momentum*v - lr*g; w += v.
inline void sgd_step(Network& net, const Gradients& grads, SgdState& state, const TrainConfig& cfg) {
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        LayerGrads& v = state.velocity[i];
        const LayerGrads& g = grads.per_layer[i];
        if (g.weights.data.empty() && g.bias.empty()) continue;
        for (float x : g.weights.data) {
            if (!std::isfinite(x)) throw TrainingError("non-finite weight gradient at layer " + std::to_string(i));
        }
        for (float x : g.bias) {
            if (!std::isfinite(x)) throw TrainingError("non-finite bias gradient at layer " + std::to_string(i));
        }
        float* w = nullptr;
        std::size_t wn = 0;
        std::vector<float>* b = nullptr;
        if (auto* c = std::get_if<ConvLayer>(&net.layers()[i])) {
            w = c->filter.weights.data.data();
            wn = c->filter.weights.data.size();
            b = &c->filter.bias;
        } else if (auto* dl = std::get_if<DenseLayer>(&net.layers()[i])) {
            w = dl->weights.data.data();
            wn = dl->weights.data.size();
            b = &dl->bias;
        } else {
            continue;
        }
        for (std::size_t k = 0; k < wn; ++k) {
            float& vel = v.weights.data[k];
            vel = cfg.momentum * vel - cfg.learning_rate * g.weights.data[k];
            w[k] += vel;
        }
        for (std::size_t k = 0; k < b->size(); ++k) {
            float& vel = v.bias[k];
            vel = cfg.momentum * vel - cfg.learning_rate * g.bias[k];
            (*b)[k] += vel;
        }
    }
}

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double eval_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;

    double final_accuracy() const { return history.empty() ? 0.0 : history.back().eval_accuracy; }
};

/// Minibatch SGD over the training set with a per-epoch Fisher-Yates shuffle
/// drawn from cfg.seed. Aborts on non-finite epoch loss.
inline TrainResult train(Network& net, const Dataset& train_set, const Dataset& eval_set,
                         const TrainConfig& cfg) {
    if (train_set.images.empty()) throw TrainingError("train: empty training set");
    if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0f) throw TrainingError("train: bad config");
    std::mt19937 gen(cfg.seed);
    SgdState state = make_sgd_state(net);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffle_indices(train_set.size(), gen);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> images;
            std::vector<int> labels;
            images.reserve(stop - start);
            labels.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                images.push_back(train_set.images[order[k]]);
                labels.push_back(train_set.labels[order[k]]);
            }
            const BatchResult batch = run_batch(net, images, labels, cfg.threads);
            loss_sum += batch.loss * static_cast<double>(stop - start);
            seen += stop - start;
            sgd_step(net, batch.grads, state, cfg);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(seen);
        if (!std::isfinite(stats.mean_loss)) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch));
        }
        stats.eval_accuracy = eval_set.images.empty()
                                  ? 0.0
                                  : evaluate(net, eval_set.images, eval_set.labels, cfg.threads);
        result.history.push_back(stats);
    }
    return result;
}

/// Warm-started finetuning: same loop, learning rate cut 10x from the
/// scratch-training default, epoch count set by the round budget.
inline TrainResult finetune(Network& net, const Dataset& train_set, const Dataset& eval_set,
                            TrainConfig cfg, int epochs) {
    cfg.learning_rate /= 10.0f;
    cfg.epochs = epochs;
    return train(net, train_set, eval_set, cfg);
}

}  // namespace vipnet
