// vipnet: train, measure, and verify virtually-pooled convolutional nets.
//
// Exit codes: 0 success, 64 usage error, 65 malformed data or model,
// 66 missing file or directory, 70 shape or internal error, 74 training
// divergence.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vipnet/vipnet.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 64;
constexpr int kExitFormat = 65;
constexpr int kExitMissing = 66;
constexpr int kExitInternal = 70;
constexpr int kExitDiverged = 74;

struct MissingFile {
    std::string path;
};

void require_exists(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingFile{path};
}

struct DataArgs {
    std::string spec = "synthetic:1";
    int train_n = 2000;
    int eval_n = 500;
    int cifar_limit = 5000;
};

struct LoadedData {
    vipnet::Dataset train;
    vipnet::Dataset eval;
    std::array<int, 3> input_shape{};
};

// --data accepts a CIFAR-10 batch directory or "synthetic:<seed>".
LoadedData load_data(const DataArgs& args) {
    LoadedData out;
    if (args.spec.rfind("synthetic:", 0) == 0) {
        const unsigned seed = static_cast<unsigned>(std::stoul(args.spec.substr(10)));
        vipnet::Dataset all = vipnet::gen_synthetic(seed, args.train_n + args.eval_n, 10);
        out.train = vipnet::subset(all, 0, static_cast<std::size_t>(args.train_n));
        out.eval = vipnet::subset(all, static_cast<std::size_t>(args.train_n), all.size());
    } else {
        require_exists(args.spec);
        vipnet::Cifar10Data cifar = vipnet::load_cifar10(args.spec);
        const std::size_t limit =
            std::min<std::size_t>(cifar.train.size(), static_cast<std::size_t>(args.cifar_limit));
        out.train = vipnet::subset(cifar.train, 0, limit);
        out.eval = cifar.test.images.empty()
                       ? vipnet::subset(cifar.train, limit,
                                        std::min(cifar.train.size(), limit + 1000))
                       : vipnet::subset(cifar.test, 0, std::min<std::size_t>(cifar.test.size(), 1000));
    }
    if (out.train.images.empty() || out.eval.images.empty()) {
        throw vipnet::FormatError("dataset '" + args.spec + "' yielded an empty split");
    }
    const vipnet::Tensor& first = out.train.images.front();
    out.input_shape = {first.shape[0], first.shape[1], first.shape[2]};
    return out;
}

vipnet::Network load_model_checked(const std::string& dir) {
    require_exists(dir);
    require_exists((std::filesystem::path(dir) / "manifest.json").string());
    require_exists((std::filesystem::path(dir) / "weights.bin").string());
    return vipnet::load_model(dir);
}

vipnet::ExperimentManifest start_manifest(const std::string& command, unsigned seed, int threads,
                                          const nlohmann::json& config) {
    vipnet::ExperimentManifest m;
    m.command = command;
    m.config = config;
    m.seed = seed;
    m.threads = threads;
    m.started_utc = vipnet::iso8601_utc_now();
    return m;
}

std::vector<int> parse_groups(const std::string& csv) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? csv.npos : comma - pos);
        out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw vipnet::FormatError("--groups must list at least one group size");
    return out;
}

int cmd_train(const DataArgs& data_args, const std::string& out_dir, vipnet::TrainConfig cfg) {
    const LoadedData data = load_data(data_args);
    vipnet::ExperimentManifest manifest = start_manifest(
        "train", cfg.seed, cfg.threads,
        {{"data", data_args.spec},
         {"epochs", cfg.epochs},
         {"lr", cfg.learning_rate},
         {"batch", cfg.batch_size},
         {"train_n", data.train.size()},
         {"eval_n", data.eval.size()}});

    vipnet::Network net = vipnet::make_reference_net(data.input_shape, data.train.classes);
    vipnet::init_weights(net, cfg.seed);
    const vipnet::TrainResult result = vipnet::train(net, data.train, data.eval, cfg);

    std::filesystem::create_directories(out_dir);
    const std::string model_dir = (std::filesystem::path(out_dir) / "model").string();
    vipnet::save_model(net, model_dir);
    manifest.model_hash = vipnet::model_dir_hash(model_dir);
    manifest.finished_utc = vipnet::iso8601_utc_now();
    vipnet::write_training_log_csv((std::filesystem::path(out_dir) / "training.csv").string(), result,
                                   manifest);
    std::cout << "trained " << result.history.size() << " epochs, eval accuracy "
              << result.final_accuracy() << "\nmodel written to " << model_dir << "\n";
    return kExitOk;
}

int cmd_sensitivity(const std::string& model_dir, const DataArgs& data_args,
                    const std::string& out_dir, int threads) {
    vipnet::Network net = load_model_checked(model_dir);
    const LoadedData data = load_data(data_args);
    vipnet::ExperimentManifest manifest =
        start_manifest("sensitivity", 0, threads, {{"data", data_args.spec}, {"model", model_dir}});
    manifest.model_hash = vipnet::model_dir_hash(model_dir);

    const vipnet::SensitivityReport report = vipnet::sensitivity_analysis(net, data.eval, threads);
    manifest.finished_utc = vipnet::iso8601_utc_now();
    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / "sensitivity.csv").string();
    vipnet::write_sensitivity_csv(path, report, manifest);
    std::cout << "baseline accuracy " << report.baseline_accuracy << ", " << report.records.size()
              << " conv layers -> " << path << "\n";
    return kExitOk;
}

int cmd_plan_run(const std::string& model_dir, const DataArgs& data_args, const std::string& groups,
                 const std::string& out_dir, vipnet::TrainConfig cfg, int finetune_epochs,
                 int repeats, int warmup, int inner, int min_of) {
    vipnet::Network net = load_model_checked(model_dir);
    const LoadedData data = load_data(data_args);
    vipnet::ExperimentManifest manifest = start_manifest(
        "plan-run", cfg.seed, cfg.threads,
        {{"data", data_args.spec}, {"model", model_dir}, {"groups", groups},
         {"finetune_epochs", finetune_epochs}, {"repeats", repeats}, {"warmup", warmup},
         {"inner_iters", inner}, {"min_of", min_of}, {"lr", cfg.learning_rate}});
    manifest.model_hash = vipnet::model_dir_hash(model_dir);

    const vipnet::SensitivityReport report =
        vipnet::sensitivity_analysis(net, data.eval, cfg.threads);
    const vipnet::VipPlan plan = vipnet::build_plan(report.records, parse_groups(groups));

    vipnet::RunPlanOptions opts;
    opts.train = cfg;
    opts.finetune_epochs = finetune_epochs;
    opts.bench.repeats = repeats;
    opts.bench.warmup = warmup;
    opts.bench.inner_iters = inner;
    opts.bench.min_of = min_of;
    opts.bench.threads = cfg.threads;
    const std::vector<vipnet::TradeoffPoint> points =
        vipnet::run_plan(net, plan, data.train, data.eval, opts);

    manifest.finished_utc = vipnet::iso8601_utc_now();
    std::filesystem::create_directories(out_dir);
    const std::string csv = (std::filesystem::path(out_dir) / "tradeoff.csv").string();
    vipnet::write_tradeoff_csv(csv, points, manifest);
    const std::string final_model = (std::filesystem::path(out_dir) / "model-final").string();
    vipnet::save_model(net, final_model);
    std::cout << points.size() << " trade-off points -> " << csv << "\nfinal speedup "
              << points.back().speedup << "x, accuracy " << points.back().accuracy << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& model_dir, const std::string& out_dir, int repeats, int warmup,
              int inner, int min_of, int threads) {
    vipnet::Network net = load_model_checked(model_dir);
    vipnet::ExperimentManifest manifest = start_manifest(
        "bench", 0, threads,
        {{"model", model_dir}, {"repeats", repeats}, {"warmup", warmup}, {"inner_iters", inner},
         {"min_of", min_of}});
    manifest.model_hash = vipnet::model_dir_hash(model_dir);

    vipnet::Tensor input(
        {net.input_shape()[0], net.input_shape()[1], net.input_shape()[2]});
    std::mt19937 gen(42);
    for (float& v : input.data) v = vipnet::normal01(gen);
    vipnet::BenchOptions opts;
    opts.repeats = repeats;
    opts.warmup = warmup;
    opts.inner_iters = inner;
    opts.min_of = min_of;
    opts.threads = threads;
    const vipnet::LatencyStats stats = vipnet::benchmark_latency(net, input, opts);
    manifest.finished_utc = vipnet::iso8601_utc_now();
    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / "latency.json").string();
    vipnet::write_latency_json(path, stats, repeats, warmup, manifest);
    std::cout << "mean " << stats.mean_s * 1e3 << " ms over " << repeats << " runs, NSR "
              << stats.nsr << " -> " << path << "\n";
    return kExitOk;
}

int cmd_bound_check(int trials, unsigned seed, const std::string& norm_name,
                    const std::string& out_dir) {
    vipnet::FilterNormKind norm;
    if (norm_name == "rms") {
        norm = vipnet::FilterNormKind::Rms;
    } else if (norm_name == "sum") {
        norm = vipnet::FilterNormKind::Sum;
    } else {
        throw vipnet::FormatError("--norm must be rms or sum, got '" + norm_name + "'");
    }
    vipnet::ExperimentManifest manifest = start_manifest(
        "bound-check", seed, 1, {{"trials", trials}, {"norm", norm_name}});
    const vipnet::BoundCampaignResult result = vipnet::run_bound_campaign(seed, trials, norm);
    manifest.finished_utc = vipnet::iso8601_utc_now();

    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / "bound-trials.json").string();
    std::vector<vipnet::BoundTrial> all = result.trials;
    all.insert(all.end(), result.sum_norm_reruns.begin(), result.sum_norm_reruns.end());
    vipnet::write_bound_trials_json(path, all, manifest);
    std::cout << trials << " trials, " << result.violations << " violations -> " << path << "\n";
    if (!result.sum_norm_reruns.empty()) {
        std::cout << result.sum_norm_reruns.size()
                  << " violating trials rerun with the sum norm (records appended)\n";
    }
    return result.violations == 0 ? kExitOk : kExitInternal;
}

int cmd_infer(const std::string& model_dir, const DataArgs& data_args, const std::string& out_dir,
              int threads) {
    vipnet::Network net = load_model_checked(model_dir);
    const LoadedData data = load_data(data_args);
    vipnet::ExperimentManifest manifest =
        start_manifest("infer", 0, threads, {{"model", model_dir}, {"data", data_args.spec}});
    manifest.model_hash = vipnet::model_dir_hash(model_dir);

    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / "predictions.csv").string();
    std::ofstream out(path);
    if (!out) throw vipnet::FormatError("cannot write " + path);
    out << "# schema: predictions v1\n";
    out << "# manifest: " << manifest.to_json().dump() << "\n";
    out << "index,predicted,label\n";
    int correct = 0;
    for (std::size_t i = 0; i < data.eval.size(); ++i) {
        const int pred = net.predict(data.eval.images[i], threads);
        if (pred == data.eval.labels[i]) ++correct;
        out << i << "," << pred << "," << data.eval.labels[i] << "\n";
    }
    std::cout << correct << "/" << data.eval.size() << " correct -> " << path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "vipnet: virtually-pooled CNN training, benchmarking, and error-bound verification\n"
        "Exit codes: 0 ok, 64 usage, 65 bad data/model format, 66 missing file,\n"
        "70 shape/internal error (bound-check: any bound violation), 74 training divergence."};
    app.require_subcommand(1);

    DataArgs data_args;
    std::string model_dir, out_dir = "out", groups = "2,2", norm = "rms";
    vipnet::TrainConfig cfg;
    int repeats = 50, warmup = 3, inner = 1, min_of = 5, finetune_epochs = 2, trials = 100;

    auto add_data_flags = [&](CLI::App* c) {
        c->add_option("--data", data_args.spec, "CIFAR-10 batch directory or synthetic:<seed>");
        c->add_option("--train-n", data_args.train_n, "synthetic training samples");
        c->add_option("--eval-n", data_args.eval_n, "synthetic evaluation samples");
        c->add_option("--limit", data_args.cifar_limit, "cap on CIFAR training samples");
    };

    CLI::App* train = app.add_subcommand("train", "train the reference net from scratch");
    add_data_flags(train);
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--epochs", cfg.epochs, "training epochs");
    train->add_option("--lr", cfg.learning_rate, "learning rate");
    train->add_option("--batch", cfg.batch_size, "batch size");
    train->add_option("--seed", cfg.seed, "RNG seed");
    train->add_option("--threads", cfg.threads, "worker threads");

    CLI::App* sens = app.add_subcommand("sensitivity", "per-layer ViP sensitivity analysis");
    sens->add_option("--model", model_dir, "model directory")->required();
    add_data_flags(sens);
    sens->add_option("--out", out_dir, "output directory");
    sens->add_option("--threads", cfg.threads, "worker threads");

    CLI::App* plan = app.add_subcommand("plan-run", "grouped progressive ViP insertion + finetuning");
    plan->add_option("--model", model_dir, "model directory")->required();
    add_data_flags(plan);
    plan->add_option("--groups", groups, "comma-separated round sizes, least sensitive first");
    plan->add_option("--epochs", finetune_epochs, "finetune epochs per round");
    plan->add_option("--lr", cfg.learning_rate, "scratch learning rate (finetune uses lr/10)");
    plan->add_option("--seed", cfg.seed, "RNG seed");
    plan->add_option("--repeats", repeats, "latency repeats per point");
    plan->add_option("--warmup", warmup, "latency warm-up runs");
    plan->add_option("--inner", inner, "forwards folded into each timed sub-run");
    plan->add_option("--min-of", min_of, "sub-runs per reported run, best kept");
    plan->add_option("--threads", cfg.threads, "worker threads");
    plan->add_option("--out", out_dir, "output directory");

    CLI::App* bench = app.add_subcommand("bench", "latency benchmark of a saved model");
    bench->add_option("--model", model_dir, "model directory")->required();
    bench->add_option("--repeats", repeats, "timed runs");
    bench->add_option("--warmup", warmup, "warm-up runs");
    bench->add_option("--inner", inner, "forwards folded into each timed sub-run");
    bench->add_option("--min-of", min_of, "sub-runs per reported run, best kept");
    bench->add_option("--threads", cfg.threads, "worker threads");
    bench->add_option("--out", out_dir, "output directory");

    CLI::App* bound = app.add_subcommand("bound-check", "error-bound verification campaign");
    bound->add_option("--trials", trials, "number of random networks");
    bound->add_option("--seed", cfg.seed, "campaign seed");
    bound->add_option("--norm", norm, "filter norm for B: rms|sum");
    bound->add_option("--out", out_dir, "output directory");

    CLI::App* infer = app.add_subcommand("infer", "per-image predictions on the eval split");
    infer->add_option("--model", model_dir, "model directory")->required();
    add_data_flags(infer);
    infer->add_option("--out", out_dir, "output directory");
    infer->add_option("--threads", cfg.threads, "worker threads");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(data_args, out_dir, cfg);
        if (sens->parsed()) return cmd_sensitivity(model_dir, data_args, out_dir, cfg.threads);
        if (plan->parsed()) {
            return cmd_plan_run(model_dir, data_args, groups, out_dir, cfg, finetune_epochs, repeats,
                                warmup, inner, min_of);
        }
        if (bench->parsed()) {
            return cmd_bench(model_dir, out_dir, repeats, warmup, inner, min_of, cfg.threads);
        }
        if (bound->parsed()) return cmd_bound_check(trials, cfg.seed, norm, out_dir);
        if (infer->parsed()) return cmd_infer(model_dir, data_args, out_dir, cfg.threads);
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const MissingFile& e) {
        std::cerr << "error: missing file or directory: " << e.path << "\n";
        return kExitMissing;
    } catch (const vipnet::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const vipnet::TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const vipnet::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}
