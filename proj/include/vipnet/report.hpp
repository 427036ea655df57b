#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vipnet/bound.hpp"
#include "vipnet/manifest.hpp"
#include "vipnet/pipeline.hpp"
#include "vipnet/tensor.hpp"
#include "vipnet/trainer.hpp"

namespace vipnet {

// CSV reports start with two comment lines, "# schema: <name> v<N>" and
// "# manifest: <single-line JSON>", then the header row. Consumers that
// cannot skip comments can drop lines starting with '#'.

namespace detail {

inline std::ofstream open_report(const std::string& path, const std::string& schema,
                                 const ExperimentManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "# schema: " << schema << "\n";
    out << "# manifest: " << manifest.to_json().dump() << "\n";
    return out;
}

inline std::string join_layers(const std::vector<int>& layers) {
    std::string s;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) s += "|";
        s += std::to_string(layers[i]);
    }
    return s;
}

}  // namespace detail

inline void write_sensitivity_csv(const std::string& path, const SensitivityReport& report,
                                  const ExperimentManifest& manifest) {
    std::ofstream out = detail::open_report(path, "sensitivity v1", manifest);
    out << "# baseline_accuracy: " << report.baseline_accuracy << "\n";
    out << "layer,A_c,acc_drop,precedes_pooling\n";
    for (const SensitivityRecord& r : report.records) {
        out << r.conv_layer << "," << r.accuracy_with_vip << "," << r.accuracy_drop << ","
            << (r.precedes_pooling ? 1 : 0) << "\n";
    }
}

inline void write_tradeoff_csv(const std::string& path, const std::vector<TradeoffPoint>& points,
                               const ExperimentManifest& manifest) {
    std::ofstream out = detail::open_report(path, "tradeoff v1", manifest);
    out << "round,vip_layers,accuracy,acc_drop,flops,latency_mean_s,latency_nsr,speedup\n";
    const double baseline = points.empty() ? 0.0 : points.front().accuracy;
    for (const TradeoffPoint& p : points) {
        out << p.round << "," << detail::join_layers(p.vip_layers) << "," << p.accuracy << ","
            << (baseline - p.accuracy) << "," << p.flops << "," << p.latency_mean_s << ","
            << p.latency_nsr << "," << p.speedup << "\n";
    }
}

inline void write_training_log_csv(const std::string& path, const TrainResult& result,
                                   const ExperimentManifest& manifest) {
    std::ofstream out = detail::open_report(path, "training v1", manifest);
    out << "epoch,loss,eval_accuracy\n";
    for (const EpochStats& e : result.history) {
        out << e.epoch << "," << e.mean_loss << "," << e.eval_accuracy << "\n";
    }
}

struct BoundTrial {
    unsigned seed = 0;
    int vip_layer = 0;
    int observe_layer = 0;
    BoundResult result;
};

inline nlohmann::json bound_trial_json(const BoundTrial& t) {
    nlohmann::json j{{"seed", t.seed},
                     {"vipLayer", t.vip_layer},
                     {"observeLayer", t.observe_layer},
                     {"L", t.result.lipschitz},
                     {"bound", t.result.bound}};
    j["measuredError"] = t.result.measured_error ? nlohmann::json(*t.result.measured_error)
                                                 : nlohmann::json();
    j["holds"] = t.result.holds ? nlohmann::json(*t.result.holds) : nlohmann::json();
    return j;
}

inline void write_bound_trials_json(const std::string& path, const std::vector<BoundTrial>& trials,
                                    const ExperimentManifest& manifest) {
    nlohmann::json j;
    j["schema"] = "bound-trials v1";
    j["manifest"] = manifest.to_json();
    j["trials"] = nlohmann::json::array();
    for (const BoundTrial& t : trials) j["trials"].push_back(bound_trial_json(t));
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline void write_latency_json(const std::string& path, const LatencyStats& stats, int repeats,
                               int warmup, const ExperimentManifest& manifest) {
    nlohmann::json j;
    j["schema"] = "latency v1";
    j["manifest"] = manifest.to_json();
    j["repeats"] = repeats;
    j["warmup"] = warmup;
    j["mean_s"] = stats.mean_s;
    j["nsr"] = stats.nsr;
    j["samples_s"] = stats.samples_s;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace vipnet
