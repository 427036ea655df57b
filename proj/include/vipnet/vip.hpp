#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vipnet/conv.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

// Alignment convention, fixed repo-wide: with 0-based indexing the stride-2s
// convolution samples the stride-s output at both-odd coordinates,
// Red(a, b) == Orig(2a+1, 2b+1). Reduced extents are ceil(target/2); for odd
// targets the last reduced row/column sits one step past the original grid
// (computed with zero padding like any other window) and reaches the output
// only through border interpolation.

/// Stride-doubled convolution output plus the stride-s target shape it must
/// be expanded back to.
struct ReducedMap {
    Tensor map;  // [C', ceil(H/2), ceil(W/2)]
    int target_h = 0;
    int target_w = 0;

    ReducedMap() = default;

    ReducedMap(Tensor m, int th, int tw) : map(std::move(m)), target_h(th), target_w(tw) {
        if (map.rank() != 3) throw ShapeError("reduced map must be rank 3, got " + map.shape_str());
        if (map.shape[1] != (th + 1) / 2 || map.shape[2] != (tw + 1) / 2) {
            throw ShapeError("reduced extents " + map.shape_str() + " do not equal ceil(target/2) for target " +
                             std::to_string(th) + "x" + std::to_string(tw));
        }
    }

    int channels() const { return map.shape[0]; }
    int reduced_h() const { return map.shape[1]; }
    int reduced_w() const { return map.shape[2]; }
};

/// Interpolation output; same shape as the stride-s convolution output it
/// stands in for.
using VipOutput = Tensor;

/// Reduced map embedded into the even envelope grid (2*ceil(H/2) by
/// 2*ceil(W/2), equal to the target when both dims are even) with exact
/// values at both-odd positions and structural zeros elsewhere. The mask
/// marks positions holding exact values; it is a position test, not a value
/// test, so a genuine zero activation still counts as an exact neighbor.
struct ZeroSpacedMap {
    Tensor grid;  // [C', 2*ceil(H/2), 2*ceil(W/2)]
    std::vector<std::uint8_t> mask;  // per (row, col) of the grid
    int target_h = 0;
    int target_w = 0;

    bool exact_at(int h, int w) const {
        return mask[static_cast<std::size_t>(h) * grid.shape[2] + w] != 0;
    }
};

/// Stride-doubled convolution: evaluates the stride-s conv on the both-odd
/// output subgrid only, quartering the window count for even target dims.
inline ReducedMap reduced_conv(const Tensor& input, const ConvFilter& f, int threads = 1) {
    check_conv_input(input, f);
    const int target_h = conv_out_extent(input.shape[1], f.kernel(), f.stride, f.pad);
    const int target_w = conv_out_extent(input.shape[2], f.kernel(), f.stride, f.pad);
    const int rh = (target_h + 1) / 2;
    const int rw = (target_w + 1) / 2;
    // window of original output row 2a+1 starts at (2a+1)*s - p
    Tensor m = conv_grid(input, f, f.stride - f.pad, f.stride - f.pad, 2 * f.stride, 2 * f.stride,
                         rh, rw, threads);
    return ReducedMap(std::move(m), target_h, target_w);
}

inline long long reduced_conv_flops(const ConvFilter& f, int target_h, int target_w) {
    return conv_flops(f, (target_h + 1) / 2, (target_w + 1) / 2);
}

inline ZeroSpacedMap zero_space(const ReducedMap& red) {
    const int c = red.channels(), rh = red.reduced_h(), rw = red.reduced_w();
    ZeroSpacedMap zs;
    zs.target_h = red.target_h;
    zs.target_w = red.target_w;
    zs.grid = Tensor({c, 2 * rh, 2 * rw});
    zs.mask.assign(static_cast<std::size_t>(2 * rh) * (2 * rw), 0);
    for (int a = 0; a < rh; ++a) {
        for (int b = 0; b < rw; ++b) {
            zs.mask[static_cast<std::size_t>(2 * a + 1) * (2 * rw) + (2 * b + 1)] = 1;
            for (int ch = 0; ch < c; ++ch) {
                zs.grid.at(ch, 2 * a + 1, 2 * b + 1) = red.map.at(ch, a, b);
            }
        }
    }
    return zs;
}

/// Normative interpolation: every target position is the mean of the exact
/// (mask-true) entries inside its in-bounds 3x3 window on the envelope grid.
inline VipOutput interpolate_oracle(const ZeroSpacedMap& zs) {
    const int c = zs.grid.shape[0], gh = zs.grid.shape[1], gw = zs.grid.shape[2];
    Tensor out({c, zs.target_h, zs.target_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < zs.target_h; ++i) {
            for (int j = 0; j < zs.target_w; ++j) {
                float sum = 0.0f;
                int count = 0;
                for (int y = std::max(0, i - 1); y <= std::min(gh - 1, i + 1); ++y) {
                    for (int x = std::max(0, j - 1); x <= std::min(gw - 1, j + 1); ++x) {
                        if (zs.exact_at(y, x)) {
                            sum += zs.grid.at(ch, y, x);
                            ++count;
                        }
                    }
                }
                if (count == 0) {
                    // unreachable for any valid reduced map; fail hard rather than emit garbage
                    throw ShapeError("interpolation window without exact entry at (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
                }
                out.at(ch, i, j) = sum / static_cast<float>(count);
            }
        }
    }
    return out;
}

namespace detail {

// Reduced row/col indices whose zero-spaced homes flank target coordinate t
// (t-1 and t+1 for even t), clamped to the reduced extent.
struct NeighborPair {
    int lo;
    int hi;
};

inline NeighborPair flanking(int t, int reduced_extent) {
    int lo = t >= 1 ? (t - 1) / 2 : 0;
    int hi = std::min(t / 2, reduced_extent - 1);
    return {std::min(lo, reduced_extent - 1), hi};
}

}  // namespace detail

/// Four-case closed form of the interpolation, reading the reduced map
/// directly. Matches interpolate_oracle bitwise: neighbor sums accumulate in
/// the oracle's window scan order and the divisor is the distinct-neighbor
/// count (border windows shrink; no fixed 1/4 weighting there).
inline VipOutput interpolate_fast(const ReducedMap& red) {
    const int c = red.channels(), rh = red.reduced_h(), rw = red.reduced_w();
    const int h = red.target_h, w = red.target_w;
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            const bool row_exact = (i % 2) == 1;
            const detail::NeighborPair ra = detail::flanking(i, rh);
            for (int j = 0; j < w; ++j) {
                const bool col_exact = (j % 2) == 1;
                float v;
                if (row_exact && col_exact) {
                    v = red.map.at(ch, i / 2, j / 2);
                } else if (row_exact) {
                    const detail::NeighborPair cb = detail::flanking(j, rw);
                    v = cb.lo == cb.hi
                            ? red.map.at(ch, i / 2, cb.lo)
                            : (red.map.at(ch, i / 2, cb.lo) + red.map.at(ch, i / 2, cb.hi)) * 0.5f;
                } else if (col_exact) {
                    v = ra.lo == ra.hi
                            ? red.map.at(ch, ra.lo, j / 2)
                            : (red.map.at(ch, ra.lo, j / 2) + red.map.at(ch, ra.hi, j / 2)) * 0.5f;
                } else {
                    const detail::NeighborPair cb = detail::flanking(j, rw);
                    if (ra.lo == ra.hi && cb.lo == cb.hi) {
                        v = red.map.at(ch, ra.lo, cb.lo);
                    } else if (ra.lo == ra.hi) {
                        v = (red.map.at(ch, ra.lo, cb.lo) + red.map.at(ch, ra.lo, cb.hi)) * 0.5f;
                    } else if (cb.lo == cb.hi) {
                        v = (red.map.at(ch, ra.lo, cb.lo) + red.map.at(ch, ra.hi, cb.lo)) * 0.5f;
                    } else {
                        v = (red.map.at(ch, ra.lo, cb.lo) + red.map.at(ch, ra.lo, cb.hi) +
                             red.map.at(ch, ra.hi, cb.lo) + red.map.at(ch, ra.hi, cb.hi)) *
                            0.25f;
                    }
                }
                out.at(ch, i, j) = v;
            }
        }
    }
    return out;
}

/// Transpose of interpolate_fast: scatters each output-position gradient back
/// to the reduced entries it read, with the same coefficients.
inline Tensor interpolate_backward(const Tensor& d_out, int reduced_h, int reduced_w) {
    const int c = d_out.shape[0], h = d_out.shape[1], w = d_out.shape[2];
    Tensor d_red({c, reduced_h, reduced_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            const bool row_exact = (i % 2) == 1;
            const detail::NeighborPair ra = detail::flanking(i, reduced_h);
            for (int j = 0; j < w; ++j) {
                const bool col_exact = (j % 2) == 1;
                const float g = d_out.at(ch, i, j);
                if (row_exact && col_exact) {
                    d_red.at(ch, i / 2, j / 2) += g;
                } else if (row_exact) {
                    const detail::NeighborPair cb = detail::flanking(j, reduced_w);
                    if (cb.lo == cb.hi) {
                        d_red.at(ch, i / 2, cb.lo) += g;
                    } else {
                        d_red.at(ch, i / 2, cb.lo) += g * 0.5f;
                        d_red.at(ch, i / 2, cb.hi) += g * 0.5f;
                    }
                } else if (col_exact) {
                    if (ra.lo == ra.hi) {
                        d_red.at(ch, ra.lo, j / 2) += g;
                    } else {
                        d_red.at(ch, ra.lo, j / 2) += g * 0.5f;
                        d_red.at(ch, ra.hi, j / 2) += g * 0.5f;
                    }
                } else {
                    const detail::NeighborPair cb = detail::flanking(j, reduced_w);
                    if (ra.lo == ra.hi && cb.lo == cb.hi) {
                        d_red.at(ch, ra.lo, cb.lo) += g;
                    } else if (ra.lo == ra.hi) {
                        d_red.at(ch, ra.lo, cb.lo) += g * 0.5f;
                        d_red.at(ch, ra.lo, cb.hi) += g * 0.5f;
                    } else if (cb.lo == cb.hi) {
                        d_red.at(ch, ra.lo, cb.lo) += g * 0.5f;
                        d_red.at(ch, ra.hi, cb.lo) += g * 0.5f;
                    } else {
                        d_red.at(ch, ra.lo, cb.lo) += g * 0.25f;
                        d_red.at(ch, ra.lo, cb.hi) += g * 0.25f;
                        d_red.at(ch, ra.hi, cb.lo) += g * 0.25f;
                        d_red.at(ch, ra.hi, cb.hi) += g * 0.25f;
                    }
                }
            }
        }
    }
    return d_red;
}

/// Virtual pooling layer: stride-doubled conv followed by the shape-restoring
/// interpolation. Output shape equals conv_forward's.
inline VipOutput vip_conv_forward(const Tensor& input, const ConvFilter& f, int threads = 1) {
    return interpolate_fast(reduced_conv(input, f, threads));
}

/// Exact FLOP count of interpolate_fast per the four cases (copies are free;
/// an n-entry mean costs n-1 adds and 1 multiply).
inline long long interp_flops(int channels, int target_h, int target_w) {
    const int rh = (target_h + 1) / 2;
    const int rw = (target_w + 1) / 2;
    long long per_channel = 0;
    for (int i = 0; i < target_h; ++i) {
        const bool row_exact = (i % 2) == 1;
        const detail::NeighborPair ra = detail::flanking(i, rh);
        const int na = ra.lo == ra.hi ? 1 : 2;
        for (int j = 0; j < target_w; ++j) {
            const bool col_exact = (j % 2) == 1;
            const detail::NeighborPair cb = detail::flanking(j, rw);
            const int nb = cb.lo == cb.hi ? 1 : 2;
            int n = 1;
            if (row_exact && col_exact) {
                continue;
            } else if (row_exact) {
                n = nb;
            } else if (col_exact) {
                n = na;
            } else {
                n = na * nb;
            }
            if (n > 1) per_channel += n;  // (n-1) adds + 1 multiply
        }
    }
    return per_channel * channels;
}

}  // namespace vipnet
