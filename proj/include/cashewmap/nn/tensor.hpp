#pragma once

#include <algorithm>
#include <cassert>
#include <span>
#include <vector>

namespace cashewmap::nn {

/// Dense channel-major feature field (channels x height x width) for a single sample.
/// Each channel plane is contiguous, so a tensor maps directly onto a
/// row-major (channels x height*width) matrix.
template <typename T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    T& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    T at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    T* channel(int ch) { return data.data() + static_cast<std::size_t>(ch) * plane(); }
    const T* channel(int ch) const { return data.data() + static_cast<std::size_t>(ch) * plane(); }
    std::span<T> span() { return data; }
    std::span<const T> span() const { return data; }

    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    /// Reshapes, reusing the allocation. Contents are unspecified afterwards.
    void reshape(int channels, int height, int width) {
        c = channels;
        h = height;
        w = width;
        data.resize(static_cast<std::size_t>(channels) * height * width);
    }

    bool operator==(const Tensor&) const = default;

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(c, h, w);
        std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }
};

}  // namespace cashewmap::nn
