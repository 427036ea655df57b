#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vipnet/rng.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

struct Dataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    int classes = 0;

    std::size_t size() const { return images.size(); }
};

inline Dataset subset(const Dataset& d, std::size_t begin, std::size_t end) {
    if (begin > end || end > d.size()) throw FormatError("subset range out of bounds");
    Dataset out;
    out.classes = d.classes;
    out.images.assign(d.images.begin() + static_cast<std::ptrdiff_t>(begin),
                      d.images.begin() + static_cast<std::ptrdiff_t>(end));
    out.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      d.labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

namespace cifar {

constexpr int kChannels = 3;
constexpr int kSide = 32;
constexpr int kPixels = kChannels * kSide * kSide;  // 3072
constexpr int kRecordBytes = 1 + kPixels;           // 3073
constexpr int kClasses = 10;

}  // namespace cifar

/// One CIFAR-10 binary batch file: 3073-byte records, 1 label byte then
/// 3072 pixel bytes in [R plane][G plane][B plane] row-major order. Pixels
/// are scaled to [0, 1]; mean subtraction is the caller's step.
inline Dataset parse_cifar10_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % cifar::kRecordBytes != 0) {
        throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                          " is not a positive multiple of " + std::to_string(cifar::kRecordBytes));
    }
    const std::size_t n = bytes.size() / cifar::kRecordBytes;
    Dataset d;
    d.classes = cifar::kClasses;
    d.images.reserve(n);
    d.labels.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec =
            reinterpret_cast<const unsigned char*>(bytes.data()) + r * cifar::kRecordBytes;
        const int label = rec[0];
        if (label >= cifar::kClasses) {
            throw FormatError(path + ": record " + std::to_string(r) + " has label byte " +
                              std::to_string(label));
        }
        Tensor img({cifar::kChannels, cifar::kSide, cifar::kSide});
        for (int i = 0; i < cifar::kPixels; ++i) {
            img.data[static_cast<std::size_t>(i)] = static_cast<float>(rec[1 + i]) / 255.0f;
        }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
    }
    return d;
}

inline std::vector<float> channel_means(const Dataset& d) {
    if (d.images.empty()) throw FormatError("channel_means on empty dataset");
    const int c = d.images[0].shape[0];
    std::vector<double> sums(static_cast<std::size_t>(c), 0.0);
    std::size_t per_channel = 0;
    for (const Tensor& img : d.images) {
        const std::size_t plane = img.size() / static_cast<std::size_t>(c);
        for (int ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                sums[static_cast<std::size_t>(ch)] += img.data[static_cast<std::size_t>(ch) * plane + i];
            }
        }
        per_channel += plane;
    }
    std::vector<float> means(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        means[static_cast<std::size_t>(ch)] =
            static_cast<float>(sums[static_cast<std::size_t>(ch)] / static_cast<double>(per_channel));
    }
    return means;
}

inline void subtract_channel_means(Dataset& d, const std::vector<float>& means) {
    for (Tensor& img : d.images) {
        const int c = img.shape[0];
        if (means.size() != static_cast<std::size_t>(c)) throw FormatError("channel mean count mismatch");
        const std::size_t plane = img.size() / static_cast<std::size_t>(c);
        for (int ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                img.data[static_cast<std::size_t>(ch) * plane + i] -= means[static_cast<std::size_t>(ch)];
            }
        }
    }
}

struct Cifar10Data {
    Dataset train;
    Dataset test;
    std::vector<float> train_means;
};

/// Loads every data_batch*.bin (train) and test_batch*.bin (test) under the
/// directory, normalizes by the training split's per-channel means.
inline Cifar10Data load_cifar10(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError(dir + " is not a directory");
    std::vector<std::string> train_files, test_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("data_batch", 0) == 0 && name.size() >= 4 &&
            name.substr(name.size() - 4) == ".bin") {
            train_files.push_back(entry.path().string());
        } else if (name.rfind("test_batch", 0) == 0 && name.size() >= 4 &&
                   name.substr(name.size() - 4) == ".bin") {
            test_files.push_back(entry.path().string());
        }
    }
    std::sort(train_files.begin(), train_files.end());
    std::sort(test_files.begin(), test_files.end());
    if (train_files.empty()) throw FormatError("no data_batch*.bin files in " + dir);
    Cifar10Data out;
    out.train.classes = cifar::kClasses;
    out.test.classes = cifar::kClasses;
    for (const std::string& f : train_files) {
        Dataset part = parse_cifar10_file(f);
        for (std::size_t i = 0; i < part.size(); ++i) {
            out.train.images.push_back(std::move(part.images[i]));
            out.train.labels.push_back(part.labels[i]);
        }
    }
    for (const std::string& f : test_files) {
        Dataset part = parse_cifar10_file(f);
        for (std::size_t i = 0; i < part.size(); ++i) {
            out.test.images.push_back(std::move(part.images[i]));
            out.test.labels.push_back(part.labels[i]);
        }
    }
    out.train_means = channel_means(out.train);
    subtract_channel_means(out.train, out.train_means);
    if (!out.test.images.empty()) subtract_channel_means(out.test, out.train_means);
    return out;
}

/// Seeded orientation-grating dataset: class k gets a sinusoidal grating at
/// angle pi*k/classes with a random phase per sample plus Gaussian noise.
/// Labels cycle 0..classes-1 so every prefix is near-balanced. The grating is
/// a fixed pattern in image-plane coordinates (about 3.2 cycles across the
/// image), so height and width only change the sampling density, the way
/// resolution works for photographs.
inline Dataset gen_synthetic(unsigned seed, int n, int classes, int height = 16, int width = 16) {
    if (classes < 1) throw FormatError("gen_synthetic: classes must be >= 1");
    if (n < classes) throw FormatError("gen_synthetic: n must be >= classes");
    constexpr float kPi = 3.14159265358979323846f;
    constexpr float kOmega = 1.25f;      // radians per pixel at the 16x16 reference size
    constexpr float kRefSide = 16.0f;
    constexpr float kNoiseSigma = 0.25f;
    std::mt19937 gen(seed);
    const float sx = kRefSide / static_cast<float>(width);
    const float sy = kRefSide / static_cast<float>(height);
    Dataset d;
    d.classes = classes;
    d.images.reserve(static_cast<std::size_t>(n));
    d.labels.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int label = k % classes;
        const float theta = kPi * static_cast<float>(label) / static_cast<float>(classes);
        const float cos_t = std::cos(theta), sin_t = std::sin(theta);
        const float phase = uniform01(gen) * 2.0f * kPi;
        Tensor img({1, height, width});
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const float u = cos_t * (static_cast<float>(x) * sx) +
                                sin_t * (static_cast<float>(y) * sy);
                img.at(0, y, x) = std::sin(kOmega * u + phase) + kNoiseSigma * normal01(gen);
            }
        }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace vipnet
