#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vipnet/dataset.hpp"
#include "vipnet/network.hpp"
#include "vipnet/tensor.hpp"
#include "vipnet/trainer.hpp"

namespace vipnet {

struct SensitivityRecord {
    int conv_layer = 0;
    double accuracy_with_vip = 0.0;  // A_c
    double accuracy_drop = 0.0;      // baseline - A_c
    bool precedes_pooling = false;
};

struct SensitivityReport {
    double baseline_accuracy = 0.0;
    std::vector<SensitivityRecord> records;  // A_c descending, ties to the deeper layer
};

/// Accuracy with ViP inserted at each conv layer alone, no finetuning.
/// Sorted by A_c descending; equal A_c prefers the deeper layer, which is the
/// cheaper one to commit first.
inline SensitivityReport sensitivity_analysis(const Network& net, const Dataset& eval_set,
                                              int threads = 1) {
    if (eval_set.images.empty()) throw TrainingError("sensitivity_analysis: empty evaluation set");
    SensitivityReport report;
    report.baseline_accuracy = evaluate(net, eval_set.images, eval_set.labels, threads);
    for (int c = 0; c < net.conv_count(); ++c) {
        Network probe = net;
        probe.set_vip(c, true);
        SensitivityRecord rec;
        rec.conv_layer = c;
        rec.accuracy_with_vip = evaluate(probe, eval_set.images, eval_set.labels, threads);
        rec.accuracy_drop = report.baseline_accuracy - rec.accuracy_with_vip;
        rec.precedes_pooling = net.precedes_pooling(c);
        report.records.push_back(rec);
    }
    std::stable_sort(report.records.begin(), report.records.end(),
                     [](const SensitivityRecord& a, const SensitivityRecord& b) {
                         if (a.accuracy_with_vip != b.accuracy_with_vip) {
                             return a.accuracy_with_vip > b.accuracy_with_vip;
                         }
                         return a.conv_layer > b.conv_layer;
                     });
    return report;
}

/// Rounds of conv ordinals; round k enables its group on top of all earlier
/// groups.
struct VipPlan {
    std::vector<std::vector<int>> rounds;

    std::vector<int> cumulative(std::size_t upto) const {
        std::vector<int> all;
        for (std::size_t r = 0; r <= upto && r < rounds.size(); ++r) {
            all.insert(all.end(), rounds[r].begin(), rounds[r].end());
        }
        return all;
    }
};

/// Consecutive partition of the sensitivity order (least sensitive first)
/// into groups of the requested sizes.
inline VipPlan build_plan(const std::vector<SensitivityRecord>& sorted_records,
                          const std::vector<int>& group_sizes) {
    std::size_t total = 0;
    for (int s : group_sizes) {
        if (s < 1) throw FormatError("build_plan: group sizes must be >= 1");
        total += static_cast<std::size_t>(s);
    }
    if (total > sorted_records.size()) {
        throw FormatError("build_plan: group sizes sum to " + std::to_string(total) + " but only " +
                          std::to_string(sorted_records.size()) + " layers are available");
    }
    VipPlan plan;
    std::size_t next = 0;
    for (int s : group_sizes) {
        std::vector<int> group;
        group.reserve(static_cast<std::size_t>(s));
        for (int k = 0; k < s; ++k) group.push_back(sorted_records[next++].conv_layer);
        plan.rounds.push_back(std::move(group));
    }
    return plan;
}

struct LatencyStats {
    double mean_s = 0.0;
    double nsr = 0.0;  // population std / mean
    std::vector<double> samples_s;
};

inline LatencyStats summarize_times(const std::vector<double>& times) {
    if (times.size() < 2) throw FormatError("summarize_times: need at least 2 samples");
    LatencyStats s;
    s.samples_s = times;
    s.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    double var = 0.0;
    for (double t : times) var += (t - s.mean_s) * (t - s.mean_s);
    var /= static_cast<double>(times.size());
    s.nsr = s.mean_s != 0.0 ? std::sqrt(var) / s.mean_s : 0.0;
    return s;
}

using ClockFn = std::function<double()>;  // monotonic seconds

inline double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct BenchOptions {
    int repeats = 50;
    int warmup = 3;
    // Forward passes folded into one timed sub-run; raises each sub-run above
    // timer resolution for sub-millisecond nets. Reported times stay
    // per-forward (sub-run / inner_iters).
    int inner_iters = 1;
    // Sub-runs timed per reported run; each run keeps its minimum. Sub-runs
    // are interleaved round-robin across runs, so a slow host phase touches
    // every run's candidate pool instead of wiping out a contiguous block.
    // Timing noise on a shared machine is one-sided, which makes the
    // per-run minimum the stable estimate of the true forward cost.
    int min_of = 1;
    int threads = 1;
    ClockFn clock;  // injectable for tests; defaults to steady_clock
};

/// Mean per-forward wall time and noise-to-signal ratio over repeated runs,
/// after warm-up passes. Each run's time is the best of min_of timed sub-runs.
inline LatencyStats benchmark_latency(const Network& net, const Tensor& input,
                                      const BenchOptions& opts = {}) {
    if (opts.repeats < 2) throw FormatError("benchmark_latency: repeats must be >= 2");
    if (opts.warmup < 0 || opts.inner_iters < 1 || opts.min_of < 1) {
        throw FormatError("benchmark_latency: bad options");
    }
    const ClockFn clock = opts.clock ? opts.clock : ClockFn(steady_seconds);
    volatile float sink = 0.0f;
    for (int i = 0; i < opts.warmup; ++i) {
        sink = sink + net.forward(input, opts.threads).data[0];
    }
    std::vector<double> best(static_cast<std::size_t>(opts.repeats),
                             std::numeric_limits<double>::infinity());
    for (int m = 0; m < opts.min_of; ++m) {
        for (int r = 0; r < opts.repeats; ++r) {
            const double t0 = clock();
            for (int k = 0; k < opts.inner_iters; ++k) {
                sink = sink + net.forward(input, opts.threads).data[0];
            }
            const double t1 = clock();
            const double per_forward = (t1 - t0) / static_cast<double>(opts.inner_iters);
            best[static_cast<std::size_t>(r)] = std::min(best[static_cast<std::size_t>(r)], per_forward);
        }
    }
    return summarize_times(best);
}

struct TradeoffPoint {
    int round = 0;  // 0 is the untouched baseline
    std::vector<int> vip_layers;
    double accuracy = 0.0;
    double latency_mean_s = 0.0;
    double latency_nsr = 0.0;
    long long flops = 0;
    double speedup = 1.0;
};

struct RunPlanOptions {
    TrainConfig train;       // scratch-training defaults; finetune cuts lr 10x
    int finetune_epochs = 2;
    BenchOptions bench;
};

/// Progressive insertion: each round enables its cumulative ViP set,
/// finetunes from the previous round's weights, then measures accuracy,
/// FLOPs, and latency. The baseline point is measured first and pins
/// speedup 1.0 exactly.
inline std::vector<TradeoffPoint> run_plan(Network& net, const VipPlan& plan, const Dataset& train_set,
                                           const Dataset& eval_set, const RunPlanOptions& opts = {}) {
    if (eval_set.images.empty()) throw TrainingError("run_plan: empty evaluation set");
    const Tensor& bench_input = eval_set.images.front();

    std::vector<TradeoffPoint> points;
    TradeoffPoint base;
    base.round = 0;
    base.accuracy = evaluate(net, eval_set.images, eval_set.labels, opts.bench.threads);
    const LatencyStats base_lat = benchmark_latency(net, bench_input, opts.bench);
    base.latency_mean_s = base_lat.mean_s;
    base.latency_nsr = base_lat.nsr;
    base.flops = net.flops();
    base.speedup = 1.0;
    points.push_back(base);

    for (std::size_t r = 0; r < plan.rounds.size(); ++r) {
        const std::vector<int> cumulative = plan.cumulative(r);
        for (int c : cumulative) net.set_vip(c, true);

        TrainConfig cfg = opts.train;
        cfg.seed = opts.train.seed + static_cast<unsigned>(r) + 1;
        try {
            finetune(net, train_set, eval_set, cfg, opts.finetune_epochs);
        } catch (const TrainingError& e) {
            throw TrainingError("run_plan: round " + std::to_string(r + 1) + " aborted: " + e.what());
        }

        TradeoffPoint p;
        p.round = static_cast<int>(r + 1);
        p.vip_layers = cumulative;
        p.accuracy = evaluate(net, eval_set.images, eval_set.labels, opts.bench.threads);
        const LatencyStats lat = benchmark_latency(net, bench_input, opts.bench);
        p.latency_mean_s = lat.mean_s;
        p.latency_nsr = lat.nsr;
        p.flops = net.flops();
        p.speedup = base.latency_mean_s / lat.mean_s;
        points.push_back(p);
    }
    return points;
}

}  // namespace vipnet
