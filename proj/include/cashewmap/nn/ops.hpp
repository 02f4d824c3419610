#pragma once

// Layer primitives with explicit backward passes. Every op works on one sample;
// gradients are accumulated (+=) into a flat buffer laid out like the ParameterStore.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/params.hpp"
#include "cashewmap/nn/tensor.hpp"

namespace cashewmap::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Square convolution with stride 1 and "same" zero padding (kernel 1 or 3).
struct Conv {
    int weight = -1;  // [cout][cin][k][k]
    int bias = -1;    // [cout], -1 for none
    int cin = 0;
    int cout = 0;
    int k = 1;
};

template <typename T>
Conv add_conv(ParameterStore<T>& ps, const std::string& name, ParamGroup group, int cin, int cout, int k, bool bias,
              double gain, std::mt19937_64& rng) {
    if (cin < 1 || cout < 1) throw ConfigError("convolution " + name + " needs positive channel counts");
    Conv c;
    c.cin = cin;
    c.cout = cout;
    c.k = k;
    c.weight = ps.add(name + ".weight", group, {cout, cin, k, k});
    ps.init_normal(c.weight, cin * k * k, gain, rng);
    if (bias) c.bias = ps.add(name + ".bias", group, {cout});
    return c;
}

namespace ops_detail {

// col[(ci*9 + ky*3 + kx), y*w + x] = x[ci, y+ky-1, x+kx-1] (zero outside).
template <typename T>
void im2col3(const Tensor<T>& x, std::vector<T>& col) {
    const int h = x.h, w = x.w;
    const std::size_t hw = x.plane();
    col.resize(static_cast<std::size_t>(x.c) * 9 * hw);
    for (int ci = 0; ci < x.c; ++ci) {
        const T* src = x.channel(ci);
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dy = ky - 1, dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    T* row = dst + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::fill(row, row + w, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int xx = 0; xx < x0; ++xx) row[xx] = T(0);
                    std::copy(srow + x0 + dx, srow + x1 + dx, row + x0);
                    for (int xx = x1; xx < w; ++xx) row[xx] = T(0);
                }
            }
    }
}

template <typename T>
void col2im3(const std::vector<T>& col, Tensor<T>& dx) {
    const int h = dx.h, w = dx.w;
    const std::size_t hw = dx.plane();
    for (int ci = 0; ci < dx.c; ++ci) {
        T* dst = dx.channel(ci);
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dy = ky - 1, ddx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* row = src + static_cast<std::size_t>(y) * w;
                    T* drow = dst + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
                    for (int xx = x0; xx < x1; ++xx) drow[xx + ddx] += row[xx];
                }
            }
    }
}

}  // namespace ops_detail

/// Reusable scratch space for im2col buffers.
template <typename T>
struct Workspace {
    std::vector<T> col;
    std::vector<T> dcol;

    /// Per-thread instance, so concurrent inference needs no shared scratch.
    static Workspace& local() {
        thread_local Workspace ws;
        return ws;
    }
};

template <typename T>
void conv_forward(const ParameterStore<T>& ps, const Conv& cv, const Tensor<T>& x, Tensor<T>& y, Workspace<T>& ws) {
    if (x.c != cv.cin) throw DataError("convolution input has " + std::to_string(x.c) + " channels, expected " +
                                       std::to_string(cv.cin));
    y.reshape(cv.cout, x.h, x.w);
    const auto hw = static_cast<Eigen::Index>(x.plane());
    const int kk = cv.cin * cv.k * cv.k;
    ConstMatMap<T> W(ps.data(cv.weight), cv.cout, kk);
    MatMap<T> Y(y.data.data(), cv.cout, hw);
    if (cv.k == 1) {
        Y.noalias() = W * ConstMatMap<T>(x.data.data(), cv.cin, hw);
    } else {
        ops_detail::im2col3(x, ws.col);
        Y.noalias() = W * ConstMatMap<T>(ws.col.data(), kk, hw);
    }
    if (cv.bias >= 0) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(ps.data(cv.bias), cv.cout);
        Y.colwise() += b;
    }
}

/// Accumulates dW/db into `grad` (skipped when the group is frozen) and, if `dx` is
/// non-null, writes the input gradient into it.
template <typename T>
void conv_backward(const ParameterStore<T>& ps, std::vector<T>& grad, const Conv& cv, const Tensor<T>& x,
                   const Tensor<T>& dy, Tensor<T>* dx, Workspace<T>& ws) {
    const auto hw = static_cast<Eigen::Index>(x.plane());
    const int kk = cv.cin * cv.k * cv.k;
    ConstMatMap<T> W(ps.data(cv.weight), cv.cout, kk);
    ConstMatMap<T> dY(dy.data.data(), cv.cout, hw);
    const bool want_w = !ps.frozen(cv.weight);
    if (want_w) {
        MatMap<T> dW(grad.data() + ps.info(cv.weight).offset, cv.cout, kk);
        if (cv.k == 1) {
            dW.noalias() += dY * ConstMatMap<T>(x.data.data(), cv.cin, hw).transpose();
        } else {
            ops_detail::im2col3(x, ws.col);
            dW.noalias() += dY * ConstMatMap<T>(ws.col.data(), kk, hw).transpose();
        }
        if (cv.bias >= 0) {
            T* db = grad.data() + ps.info(cv.bias).offset;
            for (int o = 0; o < cv.cout; ++o) {
                const T* row = dy.data.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(hw);
                double s = 0;
                for (Eigen::Index j = 0; j < hw; ++j) s += row[j];
                db[o] += static_cast<T>(s);
            }
        }
    }
    if (!dx) return;
    dx->reshape(cv.cin, x.h, x.w);
    if (cv.k == 1) {
        MatMap<T>(dx->data.data(), cv.cin, hw).noalias() = W.transpose() * dY;
    } else {
        ws.dcol.resize(static_cast<std::size_t>(kk) * static_cast<std::size_t>(hw));
        MatMap<T>(ws.dcol.data(), kk, hw).noalias() = W.transpose() * dY;
        dx->zero();
        ops_detail::col2im3(ws.dcol, *dx);
    }
}

/// Group normalization with a per-channel affine map. Inactive when gamma < 0.
struct Norm {
    int gamma = -1;
    int beta = -1;
    int channels = 0;
    int groups = 1;

    bool active() const { return gamma >= 0; }
};

/// Adds a group norm over `channels` using the largest divisor of `channels` that does
/// not exceed `max_groups`. `max_groups` = 0 returns an inactive norm.
template <typename T>
Norm add_norm(ParameterStore<T>& ps, const std::string& name, ParamGroup group, int channels, int max_groups) {
    Norm n;
    if (max_groups <= 0) return n;
    n.channels = channels;
    n.groups = 1;
    for (int g = std::min(max_groups, channels); g >= 1; --g)
        if (channels % g == 0) {
            n.groups = g;
            break;
        }
    n.gamma = ps.add(name + ".gamma", group, {channels});
    for (auto& v : ps[n.gamma]) v = T(1);
    n.beta = ps.add(name + ".beta", group, {channels});
    return n;
}

template <typename T>
struct NormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;  // per group
};

inline constexpr double kNormEps = 1e-5;

/// x <- gamma * (x - mean_g) / sqrt(var_g + eps) + beta, statistics per (group) of one sample.
template <typename T>
void norm_forward(const ParameterStore<T>& ps, const Norm& n, Tensor<T>& x, NormCache<T>* cache) {
    if (!n.active()) return;
    if (x.c != n.channels) throw DataError("group norm channel mismatch");
    const int cpg = n.channels / n.groups;
    const std::size_t hw = x.plane();
    const std::size_t m = hw * static_cast<std::size_t>(cpg);
    const T* gamma = ps.data(n.gamma);
    const T* beta = ps.data(n.beta);
    if (cache) {
        cache->xhat.reshape(x.c, x.h, x.w);
        cache->inv_std.assign(static_cast<std::size_t>(n.groups), T(0));
    }
    for (int g = 0; g < n.groups; ++g) {
        T* base = x.channel(g * cpg);
        double sum = 0, sq = 0;
        for (std::size_t i = 0; i < m; ++i) sum += static_cast<double>(base[i]);
        const double mean = sum / double(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double d = static_cast<double>(base[i]) - mean;
            sq += d * d;
        }
        const T inv = static_cast<T>(1.0 / std::sqrt(sq / double(m) + kNormEps));
        if (cache) cache->inv_std[static_cast<std::size_t>(g)] = inv;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            T* p = x.channel(c);
            T* xh = cache ? cache->xhat.channel(c) : nullptr;
            for (std::size_t i = 0; i < hw; ++i) {
                const T h = (p[i] - static_cast<T>(mean)) * inv;
                if (xh) xh[i] = h;
                p[i] = gamma[c] * h + beta[c];
            }
        }
    }
}

/// In-place: d <- d input, given d output. Affine gradients are skipped for frozen groups.
template <typename T>
void norm_backward(const ParameterStore<T>& ps, std::vector<T>& grad, const Norm& n, const NormCache<T>& cache,
                   Tensor<T>& d) {
    if (!n.active()) return;
    const int cpg = n.channels / n.groups;
    const std::size_t hw = d.plane();
    const double m = double(hw) * cpg;
    const T* gamma = ps.data(n.gamma);
    const bool want = !ps.frozen(n.gamma);
    T* dgamma = grad.data() + ps.info(n.gamma).offset;
    T* dbeta = grad.data() + ps.info(n.beta).offset;
    for (int g = 0; g < n.groups; ++g) {
        double s1 = 0, s2 = 0;  // sum dxhat, sum dxhat * xhat
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const T* dy = d.channel(c);
            const T* xh = cache.xhat.channel(c);
            double dg = 0, db = 0;
            for (std::size_t i = 0; i < hw; ++i) {
                dg += double(dy[i]) * xh[i];
                db += dy[i];
            }
            if (want) {
                dgamma[c] += static_cast<T>(dg);
                dbeta[c] += static_cast<T>(db);
            }
            s1 += db * gamma[c];
            s2 += dg * gamma[c];
        }
        const double inv = cache.inv_std[static_cast<std::size_t>(g)];
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            T* dy = d.channel(c);
            const T* xh = cache.xhat.channel(c);
            for (std::size_t i = 0; i < hw; ++i)
                dy[i] = static_cast<T>(inv / m * (m * gamma[c] * dy[i] - s1 - xh[i] * s2));
        }
    }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

/// dy <- dy * [y > 0], where y is the ReLU output.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (!(y.data[i] > T(0))) dy.data[i] = T(0);
}

/// 2x2 max pooling; `arg` receives the flat input index of each maximum.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<int>& arg) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw DataError("max pooling needs even spatial size");
    Tensor<T> y(x.c, x.h / 2, x.w / 2);
    arg.resize(y.size());
    std::size_t o = 0;
    for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < y.h; ++r)
            for (int q = 0; q < y.w; ++q, ++o) {
                int best = ((c * x.h) + 2 * r) * x.w + 2 * q;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dq = 0; dq < 2; ++dq) {
                        int idx = ((c * x.h) + 2 * r + dr) * x.w + 2 * q + dq;
                        if (x.data[static_cast<std::size_t>(idx)] > x.data[static_cast<std::size_t>(best)]) best = idx;
                    }
                arg[o] = best;
                y.data[o] = x.data[static_cast<std::size_t>(best)];
            }
    return y;
}

template <typename T>
void maxpool2_backward(const Tensor<T>& dy, const std::vector<int>& arg, Tensor<T>& dx) {
    for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[static_cast<std::size_t>(arg[o])] += dy.data[o];
}

/// Nearest-neighbour upsampling by an integer factor.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int f) {
    Tensor<T> y(x.c, x.h * f, x.w * f);
    for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < y.h; ++r)
            for (int q = 0; q < y.w; ++q) y.at(c, r, q) = x.at(c, r / f, q / f);
    return y;
}

template <typename T>
Tensor<T> upsample_backward(const Tensor<T>& dy, int f) {
    Tensor<T> dx(dy.c, dy.h / f, dy.w / f);
    for (int c = 0; c < dy.c; ++c)
        for (int r = 0; r < dy.h; ++r)
            for (int q = 0; q < dy.w; ++q) dx.at(c, r / f, q / f) += dy.at(c, r, q);
    return dx;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.h != b.h || a.w != b.w) throw DataError("concatenation of mismatched spatial sizes");
    Tensor<T> y(a.c + b.c, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return y;
}

/// Splits a concat gradient into its first `ca` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split(const Tensor<T>& d, int ca) {
    Tensor<T> a(ca, d.h, d.w), b(d.c - ca, d.h, d.w);
    std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
    std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(a.size()), d.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

/// Spatial dropout: whole channels are zeroed with probability `rate` and survivors
/// scaled by 1/(1-rate). Returns the per-channel scale (empty when inactive).
template <typename T>
std::vector<T> spatial_dropout(Tensor<T>& x, double rate, std::mt19937_64* rng) {
    if (!rng || rate <= 0.0) return {};
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<T> scale(static_cast<std::size_t>(x.c));
    for (int c = 0; c < x.c; ++c) {
        scale[static_cast<std::size_t>(c)] = keep(*rng) ? static_cast<T>(1.0 / (1.0 - rate)) : T(0);
        T* p = x.channel(c);
        for (std::size_t i = 0; i < x.plane(); ++i) p[i] *= scale[static_cast<std::size_t>(c)];
    }
    return scale;
}

template <typename T>
void dropout_backward_inplace(const std::vector<T>& scale, Tensor<T>& d) {
    if (scale.empty()) return;
    for (int c = 0; c < d.c; ++c) {
        T* p = d.channel(c);
        for (std::size_t i = 0; i < d.plane(); ++i) p[i] *= scale[static_cast<std::size_t>(c)];
    }
}

/// Logistic function clamped to the open interval (0,1) at the type's resolution.
template <typename T>
T sigmoid(T z) {
    T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
    constexpr T lo = std::numeric_limits<T>::min();
    constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
    return std::clamp(p, lo, hi);
}

/// Channel-wise softmax at every pixel.
template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
    Tensor<T> p(z.c, z.h, z.w);
    const std::size_t n = z.plane();
    for (std::size_t i = 0; i < n; ++i) {
        T m = z.data[i];
        for (int c = 1; c < z.c; ++c) m = std::max(m, z.data[c * n + i]);
        T s = 0;
        for (int c = 0; c < z.c; ++c) {
            T e = std::exp(z.data[c * n + i] - m);
            p.data[c * n + i] = e;
            s += e;
        }
        for (int c = 0; c < z.c; ++c) p.data[c * n + i] /= s;
    }
    return p;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& p, const Tensor<T>& dp) {
    Tensor<T> dz(p.c, p.h, p.w);
    const std::size_t n = p.plane();
    for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (int c = 0; c < p.c; ++c) dot += p.data[c * n + i] * dp.data[c * n + i];
        for (int c = 0; c < p.c; ++c) dz.data[c * n + i] = p.data[c * n + i] * (dp.data[c * n + i] - dot);
    }
    return dz;
}

}  // namespace cashewmap::nn
