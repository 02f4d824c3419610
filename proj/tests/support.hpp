#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "cashewmap/nn/losses.hpp"
#include "cashewmap/nn/unet.hpp"
#include "cashewmap/patch.hpp"
#include "cashewmap/synthetic.hpp"

namespace cashewmap::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cashewmap_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline SyntheticConfig small_landscape(int size = 128) {
    SyntheticConfig c;
    c.rows = c.cols = size;
    c.min_field = 8;
    c.max_field = 32;
    c.cashew_age_min = 4;
    return c;
}

inline nn::ModelConfig tiny_model(int patch = 32) {
    nn::ModelConfig c;
    c.patch_size = patch;
    c.widths = {4, 8, 8, 8};
    c.bottleneck_width = 8;
    c.convs_per_stage = 1;
    c.seed = 3;
    return c;
}

inline nn::LevelInputs<float> random_inputs(const nn::ModelConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    nn::LevelInputs<float> in;
    for (int s = 0; s < kLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        in[su] = nn::Tensor<float>(c.input_channels[su], c.patch_size >> s, c.patch_size >> s);
        for (auto& v : in[su].data) v = nd(rng);
    }
    return in;
}

struct GradCheck {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double worst = 0;  // largest relative error seen
    double pass_rate() const { return checked ? double(passed) / double(checked) : 0.0; }
};

/// Central finite differences against the analytic backward pass of a double-precision
/// miniature model. Every `stride`-th parameter is probed; relative error is
/// |num - ana| / max(|num|, |ana|, 1e-8).
inline GradCheck gradient_check(bool boundary, int patch = 32, int norm_groups = 4, std::size_t stride = 1,
                                double tol = 1e-3) {
    nn::ModelConfig mc;
    mc.patch_size = patch;
    mc.input_channels = {2, 2, 2, 2};
    mc.widths = {3, 4, 4, 4};
    mc.bottleneck_width = 4;
    mc.convs_per_stage = 2;
    mc.n_categories = 3;
    mc.dropout_rate = 0;
    mc.norm_groups = norm_groups;
    mc.seed = 5;
    auto m = nn::build_model<double>(mc);
    if (boundary) m = nn::swap_head(std::move(m), nn::HeadType::Sigmoid);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    nn::LevelInputs<double> in;
    for (int s = 0; s < kLevels; ++s) {
        in[static_cast<std::size_t>(s)] = nn::Tensor<double>(2, patch >> s, patch >> s);
        for (auto& v : in[static_cast<std::size_t>(s)].data) v = nd(rng);
    }
    nn::Tensor<double> target(boundary ? 1 : 3, patch, patch);
    for (int r = 0; r < patch; ++r)
        for (int c = 0; c < patch; ++c) {
            const int k = (r / 5 + c / 7) % 3;
            if (boundary)
                target.at(0, r, c) = k == 1;
            else
                target.at(k, r, c) = 1;
        }
    auto loss = [&](const nn::Tensor<double>& out) {
        return boundary ? nn::boundary_loss(out, target) : nn::dice_loss(out, target);
    };
    nn::ForwardCache<double> cache;
    const auto out = nn::forward(m, in, &cache);
    std::vector<double> grad;
    nn::backward(m, cache, loss(out).grad, grad);
    GradCheck r;
    auto& v = m.params.values();
    const double h = 1e-6;
    for (std::size_t i = 0; i < v.size(); i += stride) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = loss(nn::forward(m, in)).value;
        v[i] = keep - h;
        const double down = loss(nn::forward(m, in)).value;
        v[i] = keep;
        const double num = (up - down) / (2 * h);
        const double rel = std::abs(num - grad[i]) / std::max({std::abs(num), std::abs(grad[i]), 1e-8});
        r.worst = std::max(r.worst, rel);
        ++r.checked;
        if (rel < tol) ++r.passed;
    }
    return r;
}

}  // namespace cashewmap::testing
