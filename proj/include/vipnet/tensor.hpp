#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vipnet {

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major float tensor. Layout for rank 3 is [channel, height, width]
/// with width fastest-varying; rank 4 adds a leading extent (filter banks use
/// [out_channel, in_channel, kernel_row, kernel_col]).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(checked_size(shape)), 0.0f);
    }

    Tensor(std::vector<int> s, std::vector<float> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<long long>(data.size()) != checked_size(shape)) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(size(shape)));
        }
    }

    static Tensor full(std::vector<int> s, float value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    int rank() const { return static_cast<int>(shape.size()); }

    long long size() const { return static_cast<long long>(data.size()); }

    static long long size(const std::vector<int>& s) {
        long long n = 1;
        for (int e : s) n *= e;
        return n;
    }

    // rank-3 access, [c][h][w]
    float& at(int c, int h, int w) { return data[offset3(c, h, w)]; }
    float at(int c, int h, int w) const { return data[offset3(c, h, w)]; }

    // rank-4 access, [a][b][c][d]
    float& at4(int a, int b, int c, int d) { return data[offset4(a, b, c, d)]; }
    float at4(int a, int b, int c, int d) const { return data[offset4(a, b, c, d)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_str() const { return shape_str(shape); }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += "x";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }

private:
    static long long checked_size(const std::vector<int>& s) {
        if (s.empty()) throw ShapeError("tensor rank must be >= 1");
        for (int e : s) {
            if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + shape_str(s));
        }
        return size(s);
    }

    std::size_t offset3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w;
    }

    std::size_t offset4(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * shape[1] + b) * static_cast<std::size_t>(shape[2]) + c) *
                   shape[3] + d;
    }
};

inline double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (float v : t.data) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

inline double l2_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("l2_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    }
    return m;
}

}  // namespace vipnet
