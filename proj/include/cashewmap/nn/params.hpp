#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap::nn {

/// Parameter groups. Encoder, Fuser and Bottleneck form the encoder side that phase-2
/// training freezes.
enum class ParamGroup : int { Encoder = 0, Fuser, Bottleneck, Decoder, Gate, Head };
inline constexpr int kParamGroups = 6;

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::Fuser: return "fuser";
        case ParamGroup::Bottleneck: return "bottleneck";
        case ParamGroup::Decoder: return "decoder";
        case ParamGroup::Gate: return "gate";
        case ParamGroup::Head: return "head";
    }
    return "?";
}

inline bool is_encoder_side(ParamGroup g) {
    return g == ParamGroup::Encoder || g == ParamGroup::Fuser || g == ParamGroup::Bottleneck;
}

struct ParamInfo {
    std::string name;
    ParamGroup group = ParamGroup::Encoder;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const ParamInfo&) const = default;
};

/// Flat storage for every parameter tensor of a model, addressed by index.
template <typename T>
class ParameterStore {
public:
    int add(std::string name, ParamGroup group, std::vector<int> shape) {
        ParamInfo p;
        p.name = std::move(name);
        p.group = group;
        p.shape = std::move(shape);
        p.offset = values_.size();
        p.size = std::accumulate(p.shape.begin(), p.shape.end(), std::size_t{1},
                                 [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
        values_.resize(values_.size() + p.size, T(0));
        info_.push_back(std::move(p));
        return static_cast<int>(info_.size()) - 1;
    }

    /// Drops every parameter from index `first` on. Used to replace trailing heads.
    void truncate(int first) {
        if (first >= static_cast<int>(info_.size())) return;
        values_.resize(info_[static_cast<std::size_t>(first)].offset);
        info_.resize(static_cast<std::size_t>(first));
    }

    const std::vector<ParamInfo>& info() const { return info_; }
    const ParamInfo& info(int i) const { return info_[static_cast<std::size_t>(i)]; }
    std::size_t count() const { return info_.size(); }
    std::size_t total_size() const { return values_.size(); }

    std::span<T> operator[](int i) { return {values_.data() + info(i).offset, info(i).size}; }
    std::span<const T> operator[](int i) const { return {values_.data() + info(i).offset, info(i).size}; }
    const T* data(int i) const { return values_.data() + info(i).offset; }
    T* data(int i) { return values_.data() + info(i).offset; }

    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    bool frozen(ParamGroup g) const { return frozen_[static_cast<std::size_t>(g)]; }
    bool frozen(int i) const { return frozen(info(i).group); }
    void set_frozen(ParamGroup g, bool f) { frozen_[static_cast<std::size_t>(g)] = f; }

    /// Hash of the values of every parameter satisfying `pred`, over the exact bit patterns.
    template <typename Pred>
    std::uint64_t hash_where(Pred pred) const {
        Fnv1a h;
        for (const auto& p : info_)
            if (pred(p)) h.update(values_.data() + p.offset, p.size * sizeof(T));
        return h.digest();
    }

    /// He-normal init of parameter `i` with the given fan-in; biases should use zero().
    void init_normal(int i, int fan_in, double gain, std::mt19937_64& rng) {
        std::normal_distribution<double> d(0.0, std::sqrt(gain / std::max(1, fan_in)));
        for (auto& v : (*this)[i]) v = static_cast<T>(d(rng));
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& p : info_) out.add(p.name, p.group, p.shape);
        for (std::size_t k = 0; k < values_.size(); ++k) out.values()[k] = static_cast<U>(values_[k]);
        for (int g = 0; g < kParamGroups; ++g) out.set_frozen(static_cast<ParamGroup>(g), frozen(static_cast<ParamGroup>(g)));
        return out;
    }

private:
    std::vector<ParamInfo> info_;
    std::vector<T> values_;
    std::array<bool, kParamGroups> frozen_{};
};

}  // namespace cashewmap::nn
