#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/tensor.hpp"

namespace cashewmap::nn {

template <typename T>
struct LossResult {
    T value = T(0);
    Tensor<T> grad;  // d value / d pred
};

/// One-hot encoding of per-pixel class indices (values >= k are rejected).
template <typename T, typename Label>
Tensor<T> one_hot(const std::vector<Label>& labels, int k, int h, int w) {
    if (labels.size() != static_cast<std::size_t>(h) * w) throw DataError("label mask size mismatch");
    Tensor<T> t(k, h, w);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = static_cast<int>(labels[i]);
        if (c < 0 || c >= k) throw DataError("label " + std::to_string(c) + " outside head size " + std::to_string(k));
        t.data[static_cast<std::size_t>(c) * labels.size() + i] = T(1);
    }
    return t;
}

/// Soft dice loss averaged over channels:
/// 1 - (2 sum(pred*target) + smooth) / (sum(pred) + sum(target) + smooth).
/// With `channels`, only the listed channels are scored (the others get zero gradient).
template <typename T>
LossResult<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, T smooth = T(1),
                        const std::vector<int>* channels = nullptr) {
    if (!pred.same_shape(target)) throw DataError("dice loss: prediction and target shapes differ");
    if (!(smooth > T(0))) throw ConfigError("dice smoothing must be positive");
    std::vector<int> all;
    if (!channels) {
        all.resize(static_cast<std::size_t>(pred.c));
        for (int c = 0; c < pred.c; ++c) all[static_cast<std::size_t>(c)] = c;
        channels = &all;
    }
    if (channels->empty()) throw ConfigError("dice loss needs at least one channel");
    const T k = static_cast<T>(channels->size());
    LossResult<T> r;
    r.grad = Tensor<T>(pred.c, pred.h, pred.w);
    const std::size_t n = pred.plane();
    for (int c : *channels) {
        if (c < 0 || c >= pred.c) throw DataError("dice channel " + std::to_string(c) + " out of range");
        const T* p = pred.channel(c);
        const T* t = target.channel(c);
        T inter = 0, sp = 0, st = 0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += p[i] * t[i];
            sp += p[i];
            st += t[i];
        }
        const T num = T(2) * inter + smooth;
        const T den = sp + st + smooth;
        r.value += T(1) - num / den;
        T* g = r.grad.channel(c);
        for (std::size_t i = 0; i < n; ++i) g[i] = -(T(2) * t[i] * den - num) / (den * den) / k;
    }
    r.value /= k;
    return r;
}

/// Exact squared Euclidean distance transform: for each pixel, squared distance to the
/// nearest pixel with seed[i] != 0 (+inf if there is none).
inline std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& seed, int h, int w) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> f(seed.size());
    for (std::size_t i = 0; i < seed.size(); ++i) f[i] = seed[i] ? 0.0 : inf;

    // 1-D lower envelope of parabolas, applied along columns then rows.
    auto pass = [&](std::vector<double>& data, int len, int count, auto index) {
        std::vector<double> line(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
        std::vector<int> v(static_cast<std::size_t>(len));
        std::vector<double> z(static_cast<std::size_t>(len) + 1);
        for (int k = 0; k < count; ++k) {
            for (int q = 0; q < len; ++q) line[static_cast<std::size_t>(q)] = data[index(k, q)];
            int j = -1;
            for (int q = 0; q < len; ++q) {
                if (line[static_cast<std::size_t>(q)] == inf) continue;
                while (j >= 0) {
                    const int p = v[static_cast<std::size_t>(j)];
                    const double s = ((line[static_cast<std::size_t>(q)] + double(q) * q) -
                                      (line[static_cast<std::size_t>(p)] + double(p) * p)) /
                                     (2.0 * (q - p));
                    if (s <= z[static_cast<std::size_t>(j)]) {
                        --j;
                    } else {
                        break;
                    }
                }
                ++j;
                v[static_cast<std::size_t>(j)] = q;
                if (j == 0) {
                    z[0] = -inf;
                } else {
                    const int p = v[static_cast<std::size_t>(j) - 1];
                    z[static_cast<std::size_t>(j)] = ((line[static_cast<std::size_t>(q)] + double(q) * q) -
                                                      (line[static_cast<std::size_t>(p)] + double(p) * p)) /
                                                     (2.0 * (q - p));
                }
                z[static_cast<std::size_t>(j) + 1] = inf;
            }
            if (j < 0) continue;  // no finite sample on this line
            int jj = 0;
            for (int q = 0; q < len; ++q) {
                while (z[static_cast<std::size_t>(jj) + 1] < q) ++jj;
                const int p = v[static_cast<std::size_t>(jj)];
                out[static_cast<std::size_t>(q)] = double(q - p) * (q - p) + line[static_cast<std::size_t>(p)];
            }
            for (int q = 0; q < len; ++q) data[index(k, q)] = out[static_cast<std::size_t>(q)];
        }
    };
    pass(f, h, w, [w](int col, int row) { return static_cast<std::size_t>(row) * w + col; });
    pass(f, w, h, [w](int row, int col) { return static_cast<std::size_t>(row) * w + col; });
    return f;
}

/// Pixels with a 4-neighbour of a different target value (both sides of every edge).
template <typename T>
std::vector<std::uint8_t> boundary_pixels(const Tensor<T>& target) {
    const int h = target.h, w = target.w;
    std::vector<std::uint8_t> b(target.plane(), 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const T v = target.at(0, r, c);
            const bool edge = (r > 0 && target.at(0, r - 1, c) != v) || (r + 1 < h && target.at(0, r + 1, c) != v) ||
                              (c > 0 && target.at(0, r, c - 1) != v) || (c + 1 < w && target.at(0, r, c + 1) != v);
            b[static_cast<std::size_t>(r) * w + c] = edge ? 1 : 0;
        }
    return b;
}

/// Per-pixel weight of the boundary loss: Euclidean distance to the nearest target
/// boundary pixel divided by the patch diagonal. Empty when the target has no boundary.
template <typename T>
std::vector<T> boundary_weights(const Tensor<T>& target) {
    auto seeds = boundary_pixels(target);
    bool any = false;
    for (auto s : seeds) any = any || s;
    if (!any) return {};
    auto d2 = squared_distance_transform(seeds, target.h, target.w);
    const double diag = std::sqrt(double(target.h) * target.h + double(target.w) * target.w);
    std::vector<T> wts(d2.size());
    for (std::size_t i = 0; i < d2.size(); ++i) wts[i] = static_cast<T>(std::sqrt(d2[i]) / diag);
    return wts;
}

/// Mean over pixels of |pred - target| times the boundary distance weight. A target
/// without any boundary (uniform) falls back to the plain mean absolute error.
/// `weights` may be passed in to reuse a precomputed boundary_weights(target).
template <typename T>
LossResult<T> boundary_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<T>* weights = nullptr) {
    if (!pred.same_shape(target) || pred.c != 1) throw DataError("boundary loss needs matching single-channel maps");
    std::vector<T> local;
    if (!weights) {
        local = boundary_weights(target);
        weights = &local;
    }
    const bool fallback = weights->empty();
    LossResult<T> r;
    r.grad = Tensor<T>(1, pred.h, pred.w);
    const auto n = static_cast<T>(pred.size());
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const T wgt = fallback ? T(1) : (*weights)[i];
        const T diff = pred.data[i] - target.data[i];
        r.value += std::abs(diff) * wgt;
        r.grad.data[i] = (diff > 0 ? T(1) : diff < 0 ? T(-1) : T(0)) * wgt / n;
    }
    r.value /= n;
    return r;
}

}  // namespace cashewmap::nn
