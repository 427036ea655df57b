#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vipnet/network.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

namespace detail {

inline void append_f32le(std::vector<unsigned char>& out, const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(p[i]);
        out.push_back(static_cast<unsigned char>(bits & 0xff));
        out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
        out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
        out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
    }
}

inline std::vector<float> read_f32le(const std::vector<unsigned char>& buf, std::size_t byte_off,
                                     std::size_t n) {
    if (byte_off + 4 * n > buf.size()) {
        throw FormatError("weights.bin: read of " + std::to_string(n) + " floats at offset " +
                          std::to_string(byte_off) + " past end (" + std::to_string(buf.size()) + " bytes)");
    }
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = byte_off + 4 * i;
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[o]) |
                                   (static_cast<std::uint32_t>(buf[o + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[o + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[o + 3]) << 24);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

constexpr int kModelFormatVersion = 1;

/// Writes <dir>/manifest.json and <dir>/weights.bin. Weights are
/// little-endian float32 in network order, conv filters laid out
/// [outChannel][inChannel][kernelRow][kernelCol] row-major, each layer's
/// biases directly after its weights.
inline void save_model(const Network& net, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["format"] = "vipnet-model";
    manifest["version"] = kModelFormatVersion;
    manifest["input_shape"] = {net.input_shape()[0], net.input_shape()[1], net.input_shape()[2]};
    manifest["layers"] = nlohmann::json::array();

    std::vector<unsigned char> blob;
    for (const LayerSpec& l : net.layers()) {
        nlohmann::json entry;
        if (const auto* c = std::get_if<ConvLayer>(&l)) {
            entry["kind"] = "conv";
            entry["out_channels"] = c->filter.out_channels();
            entry["in_channels"] = c->filter.in_channels();
            entry["kernel"] = c->filter.kernel();
            entry["stride"] = c->filter.stride;
            entry["pad"] = c->filter.pad;
            entry["vip"] = c->vip;
            entry["weights_offset"] = blob.size();
            detail::append_f32le(blob, c->filter.weights.data.data(), c->filter.weights.data.size());
            entry["bias_offset"] = blob.size();
            detail::append_f32le(blob, c->filter.bias.data(), c->filter.bias.size());
        } else if (std::holds_alternative<ReluLayer>(l)) {
            entry["kind"] = "relu";
        } else if (std::holds_alternative<MaxPoolLayer>(l)) {
            entry["kind"] = "maxpool2x2";
        } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
            entry["kind"] = "dense";
            entry["out"] = d->weights.shape[0];
            entry["in"] = d->weights.shape[1];
            entry["weights_offset"] = blob.size();
            detail::append_f32le(blob, d->weights.data.data(), d->weights.data.size());
            entry["bias_offset"] = blob.size();
            detail::append_f32le(blob, d->bias.data(), d->bias.size());
        } else {
            entry["kind"] = "softmax";
        }
        manifest["layers"].push_back(entry);
    }

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw FormatError("cannot write manifest.json in " + dir);
    mf << manifest.dump(2) << "\n";
    std::ofstream wf(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!wf) throw FormatError("cannot write weights.bin in " + dir);
    wf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

inline Network load_model(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream mf(manifest_path);
    if (!mf) throw FormatError("cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path + ": " + e.what());
    }

    try {
        if (manifest.at("format") != "vipnet-model") throw FormatError("not a vipnet model manifest");
        if (manifest.at("version").get<int>() != kModelFormatVersion) {
            throw FormatError("unsupported model version " + manifest["version"].dump());
        }
        const std::vector<unsigned char> blob =
            detail::read_file_bytes((fs::path(dir) / "weights.bin").string());

        const auto in_shape = manifest.at("input_shape");
        std::array<int, 3> input_shape = {in_shape.at(0).get<int>(), in_shape.at(1).get<int>(),
                                          in_shape.at(2).get<int>()};
        std::vector<LayerSpec> layers;
        for (const auto& entry : manifest.at("layers")) {
            const std::string kind = entry.at("kind").get<std::string>();
            if (kind == "conv") {
                const int oc = entry.at("out_channels").get<int>();
                const int ic = entry.at("in_channels").get<int>();
                const int m = entry.at("kernel").get<int>();
                ConvFilter f;
                f.weights = Tensor({oc, ic, m, m});
                const std::vector<float> w = detail::read_f32le(
                    blob, entry.at("weights_offset").get<std::size_t>(), f.weights.data.size());
                f.weights.data = w;
                f.bias = detail::read_f32le(blob, entry.at("bias_offset").get<std::size_t>(),
                                            static_cast<std::size_t>(oc));
                f.stride = entry.at("stride").get<int>();
                f.pad = entry.at("pad").get<int>();
                layers.push_back(ConvLayer{std::move(f), entry.at("vip").get<bool>()});
            } else if (kind == "relu") {
                layers.push_back(ReluLayer{});
            } else if (kind == "maxpool2x2") {
                layers.push_back(MaxPoolLayer{});
            } else if (kind == "dense") {
                const int out_n = entry.at("out").get<int>();
                const int in_n = entry.at("in").get<int>();
                DenseLayer d;
                d.weights = Tensor({out_n, in_n});
                d.weights.data = detail::read_f32le(blob, entry.at("weights_offset").get<std::size_t>(),
                                                    d.weights.data.size());
                d.bias = detail::read_f32le(blob, entry.at("bias_offset").get<std::size_t>(),
                                            static_cast<std::size_t>(out_n));
                layers.push_back(std::move(d));
            } else if (kind == "softmax") {
                layers.push_back(SoftmaxLayer{});
            } else {
                throw FormatError("unknown layer kind '" + kind + "'");
            }
        }
        return Network(input_shape, std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path + ": " + e.what());
    }
}

}  // namespace vipnet
